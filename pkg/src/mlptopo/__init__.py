"""Topological analysis of multilayer perceptrons: layer and tower persistence, trajectories."""
from .complex import (
    ComplexError,
    Cover,
    CoverMap,
    Filtration,
    SimplicialComplex,
    betti_bruteforce,
    clique_complex,
    connected_components,
    nerve,
    proximity_graph,
    vr_filtration,
)
from .dataset import DatasetError, LabeledPointCloud, generate_circles, load_table, sparsify
from .mlp import (
    LayerImages,
    MlpModel,
    ModelError,
    TrainConfig,
    TrainingDiverged,
    accuracy,
    forward_all,
    init_model,
    train,
)
from .persistence import PersistenceDiagram, bottleneck, reduce
from .tower import (
    LayerwiseTower,
    ScaleSchedule,
    TowerError,
    layer_persistence,
    layerwise_tower,
    mlp_persistence,
    nerve_tower,
    output_cover,
    pullback_cover,
    separability_nerve_check,
)
from .trajectory import build_graph, dominant_trajectories, node_purity, point_trajectories

__version__ = "0.1.0"
