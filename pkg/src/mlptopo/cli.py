"""Command-line pipeline: generate, train, analyse and reproduce the experiments.

Every command reads a JSON run config (a built-in preset, optionally merged
with a config file and flag overrides) and works inside one output directory.
Downstream commands load the artifacts written by upstream ones.

Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .complex import ComplexError
from .dataset import DatasetError, LabeledPointCloud, generate_circles, load_table, sparsify
from .mlp import (
    ACTIVATIONS,
    LayerImages,
    MlpModel,
    ModelError,
    TrainConfig,
    TrainingDiverged,
    forward_all,
    init_model,
    train,
)
from .persistence import PersistenceDiagram, bottleneck
from .tower import (
    LayerwiseTower,
    ScaleSchedule,
    TowerError,
    barcode_csv,
    layer_persistence,
    layerwise_tower,
    mlp_persistence,
    separability_nerve_check,
)
from .trajectory import (
    build_graph,
    dominant_trajectories,
    node_purity,
    point_trajectories,
    redundant_layers,
    trajectories_from_json,
    trajectories_json,
)

log = logging.getLogger("mlptopo")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

CTG_FEATURES = ["LB", "AC", "FM", "UC", "DL", "DS", "DP", "ASTV", "MSTV", "ALTV", "MLTV",
                "Width", "Min", "Max", "Nmax", "Nzeros", "Mode", "Mean", "Median",
                "Variance", "Tendency"]

PRESETS = {
    "circles": {
        "dataset": {"kind": "circles", "n_per_class": 150, "r_inner": 0.5, "r_outer": 1.0,
                    "noise_std": 0.05, "seed": 7},
        "model": {"layer_dims": [2, 3, 1], "activation": "sigmoid", "seeds": list(range(10))},
        "train": {"epochs": 1000, "learning_rate": 0.15, "target_accuracy": 1.0},
        "analysis": {
            "schedule": [0.5, 0.4, 0.2],
            "max_dim": 2,
            "sparsify": 0.0,
            "layer_caps": [0.9, 0.8, 0.5],
            "layer_max_dim": 2,
            "prominence": [0.2, 0.1, 0.1],
            "top_k": 2,
        },
        "output_dir": "runs/circles",
    },
    "cardio": {
        "dataset": {"kind": "table", "path": "data/CTG.csv", "label_column": "CLASS",
                    "grouping": {str(k): 0 for k in range(1, 5)} | {str(k): 1 for k in range(7, 11)},
                    "feature_columns": CTG_FEATURES, "normalize": True, "drop_unmapped": True},
        "model": {"layer_dims": [21, 32, 1], "activation": "sigmoid", "seeds": list(range(10))},
        "train": {"epochs": 5000, "learning_rate": 0.01, "target_accuracy": 0.9},
        "analysis": {
            "schedule": [1.0, 2.5, 0.2],
            "max_dim": 1,
            "sparsify": 0.05,
            "layer_caps": [2.0, 3.0, 0.5],
            "layer_max_dim": 1,
            "prominence": [0.2, 0.2, 0.1],
            "top_k": 2,
        },
        "output_dir": "runs/cardio",
    },
}


def _deep_cardio() -> dict:
    """The deeper first-stage model; its trajectory report flags layers that add nothing."""
    cfg = copy.deepcopy(PRESETS["cardio"])
    cfg["model"]["layer_dims"] = [21, 32, 16, 8, 4, 1]
    cfg["analysis"].update(schedule=[1.0, 2.5, 2.0, 1.5, 1.0, 0.2],
                           layer_caps=[2.0, 3.0, 2.5, 2.0, 1.5, 0.5],
                           prominence=[0.2, 0.2, 0.2, 0.2, 0.2, 0.1])
    cfg["output_dir"] = "runs/cardio-deep"
    return cfg


PRESETS["cardio-deep"] = _deep_cardio()


_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mlptopo run config",
    "type": "object",
    "required": ["dataset", "model", "train", "analysis", "output_dir"],
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "circles"},
                        "n_per_class": {"type": "integer", "minimum": 1},
                        "r_inner": _POS,
                        "r_outer": _POS,
                        "noise_std": _NONNEG,
                        "seed": {"type": "integer"},
                    },
                },
                {
                    "type": "object",
                    "required": ["kind", "path", "label_column", "grouping"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "table"},
                        "path": {"type": "string"},
                        "label_column": {"type": "string"},
                        "grouping": {"type": "object",
                                     "additionalProperties": {"enum": [0, 1]}},
                        "feature_columns": {"type": ["array", "null"],
                                            "items": {"type": "string"}},
                        "normalize": {"type": "boolean"},
                        "drop_unmapped": {"type": "boolean"},
                    },
                },
            ]
        },
        "model": {
            "type": "object",
            "required": ["layer_dims"],
            "additionalProperties": False,
            "properties": {
                "layer_dims": {"type": "array", "minItems": 2,
                               "items": {"type": "integer", "minimum": 1}},
                "activation": {"enum": sorted(ACTIVATIONS)},
                "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "learning_rate": _POS,
                "target_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "analysis": {
            "type": "object",
            "required": ["schedule"],
            "additionalProperties": False,
            "properties": {
                "schedule": {"type": "array", "items": _POS},
                "max_dim": {"type": "integer", "minimum": 1},
                "sparsify": _NONNEG,
                "layer_caps": {"type": ["array", "null"], "items": _POS},
                "layer_max_dim": {"type": "integer", "minimum": 1},
                "prominence": {"type": "array", "items": _NONNEG},
                "top_k": {"type": "integer", "minimum": 1},
            },
        },
        "output_dir": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


class MissingArtifact(FileNotFoundError):
    pass


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "grouping":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config {path}: {err.message}") from None
    n_layers = len(cfg["model"]["layer_dims"])
    an = cfg["analysis"]
    if len(an["schedule"]) != n_layers:
        raise ConfigError(f"schedule has {len(an['schedule'])} scales for {n_layers} layers")
    for key in ("layer_caps", "prominence"):
        if an.get(key) is not None and len(an[key]) != n_layers:
            raise ConfigError(f"analysis.{key} needs one value per layer")
    if cfg["model"]["layer_dims"][-1] != 1:
        raise ConfigError("the output layer must have width 1")
    return cfg


def load_config(preset: str = "circles", path: str | None = None, overrides: dict | None = None) -> dict:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = PRESETS[preset]
    if path:
        try:
            text = Path(path).read_text()
        except FileNotFoundError:
            raise MissingArtifact(f"config file {path} not found") from None
        try:
            cfg = _merge(cfg, json.loads(text))
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path}: {err}") from None
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate_config(cfg)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except FileNotFoundError:
        raise MissingArtifact(f"missing artifact {path}; run the upstream command first") from None


# ---- pipeline steps -------------------------------------------------------

def make_cloud(cfg: dict) -> LabeledPointCloud:
    ds = cfg["dataset"]
    if ds["kind"] == "circles":
        args = {k: v for k, v in ds.items() if k != "kind"}
        return generate_circles(**args)
    try:
        return load_table(ds["path"], ds["label_column"], ds["grouping"],
                          normalize=ds.get("normalize", True),
                          feature_columns=ds.get("feature_columns"),
                          drop_unmapped=ds.get("drop_unmapped", False))
    except FileNotFoundError:
        raise MissingArtifact(f"data table {ds['path']} not found") from None


def train_sweep(cfg: dict, cloud: LabeledPointCloud) -> tuple[MlpModel, dict]:
    """Train one model per seed and keep the first reaching the target accuracy."""
    mc, tc = cfg["model"], cfg["train"]
    if mc["layer_dims"][0] != cloud.dim:
        raise ConfigError(f"input width {mc['layer_dims'][0]} does not match data dim {cloud.dim}")
    target = tc.get("target_accuracy", 1.0)
    tcfg = TrainConfig(epochs=tc.get("epochs", 1000), learning_rate=tc.get("learning_rate", 1e-3))
    best, best_report, tried = None, None, []
    for seed in mc.get("seeds", [0]):
        model = init_model(mc["layer_dims"], mc.get("activation", "sigmoid"), seed)
        report = train(model, cloud, tcfg)
        tried.append({"seed": seed, "accuracy": report.accuracy, "final_loss": report.final_loss})
        log.info("seed %d: accuracy %.4f loss %.5f", seed, report.accuracy, report.final_loss)
        if best is None or report.accuracy > best_report.accuracy:
            best, best_report, best_seed = model, report, seed
        if report.accuracy >= target:
            break
    info = {"seed": best_seed, "accuracy": best_report.accuracy,
            "final_loss": best_report.final_loss, "reached_target": best_report.accuracy >= target,
            "target_accuracy": target, "sweep": tried, "loss_trace": best_report.loss_trace}
    return best, info


def _prominent_counts(diagrams, thresholds) -> list[dict]:
    rows = []
    for i, (dgm, th) in enumerate(zip(diagrams, thresholds)):
        row = {"layer": i, "threshold": th}
        for p in dgm.dims:
            row[f"H{p}"] = len(dgm.prominent(p, th))
        rows.append(row)
    return rows


def mlp_summary(dgm: PersistenceDiagram) -> dict:
    h0, h1 = dgm.in_dim(0), dgm.in_dim(1)
    return {
        "H0_born_at_0": sum(1 for b, _ in h0 if b == 0),
        "H0_infinite": sum(1 for _, d in h0 if math.isinf(d)),
        "H1_born_at_0": sum(1 for b, _ in h1 if b == 0),
        "H1_born_at_0_dying_at_1": sum(1 for b, d in h1 if b == 0 and d == 1),
        "H1_born_at_1": sum(1 for b, _ in h1 if b == 1),
        "bars": [[p, b, None if math.isinf(d) else d] for p, b, d in dgm.features],
    }


def trajectory_summary(traj: dict, cloud: LabeledPointCloud, top_k: int) -> dict:
    labels = dict(zip(cloud.ids.tolist(), cloud.labels.tolist()))
    traj = {k: v for k, v in traj.items() if k in labels}
    graph = build_graph(traj, labels)
    dominant = dominant_trajectories(traj, top_k)
    n = len(traj)
    purities = {f"L{l}:C{e}": node_purity(node) for (l, e), node in graph.nodes.items()}
    dom_purity = []
    for path, _ in dominant:
        members = [k for k, p in traj.items() if p == path]
        counts = np.bincount([labels[k] for k in members], minlength=2)
        dom_purity.append(float(counts.max() / counts.sum()))
    return {
        "n_points": n,
        "n_distinct": len(set(traj.values())),
        "dominant": [{"path": list(p), "count": c} for p, c in dominant],
        "dominant_purity": dom_purity,
        "top_k_coverage": sum(c for _, c in dominant) / n if n else 0.0,
        "all_nodes_pure": all(v == 1.0 for v in purities.values()),
        "min_node_purity": min(purities.values()) if purities else 1.0,
        "redundant_layers": redundant_layers(traj),
    }


class Run:
    """Artifact paths of one output directory."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.root = Path(cfg["output_dir"])

    def path(self, name: str) -> Path:
        return self.root / name

    def cloud(self) -> LabeledPointCloud:
        return LabeledPointCloud.from_json(_read(self.path("cloud.json")))

    def model(self) -> MlpModel:
        return MlpModel.from_json(_read(self.path("model.json")))

    def images(self) -> LayerImages:
        return LayerImages.from_json(_read(self.path("activations.json")))

    def analysis_images(self) -> LayerImages:
        """Layer images of the (optionally sparsified) input subset."""
        threshold = self.cfg["analysis"].get("sparsify", 0.0)
        images = self.images()
        if not threshold:
            return images
        cloud = self.cloud()
        return images.subset(sparsify(cloud, threshold))


def cmd_generate(run: Run) -> dict:
    cloud = make_cloud(run.cfg)
    _write(run.path("cloud.json"), cloud.to_json())
    return {"n_points": len(cloud), "dim": cloud.dim,
            "class_counts": np.bincount(cloud.labels, minlength=2).tolist()}


def cmd_train(run: Run) -> dict:
    cloud = run.cloud()
    model, info = train_sweep(run.cfg, cloud)
    _write(run.path("model.json"), model.to_json())
    _write(run.path("train_report.json"), _dump(info))
    return {k: v for k, v in info.items() if k != "loss_trace"}


def cmd_activations(run: Run) -> dict:
    images = forward_all(run.model(), run.cloud())
    _write(run.path("activations.json"), images.to_json())
    return {"layer_dims": images.dims}


def cmd_layer_persistence(run: Run) -> dict:
    an = run.cfg["analysis"]
    images = run.images()
    # each layer is thinned on its own, unlike the tower which thins the input only
    dgms = layer_persistence(images, an.get("layer_max_dim", 2), an.get("layer_caps"),
                             min_sq_dist=an.get("sparsify") or None)
    for i, dgm in enumerate(dgms):
        _write(run.path(f"layer_persistence/layer_{i}.csv"), dgm.to_csv())
    thresholds = an.get("prominence") or [0.1] * len(dgms)
    return {"n_points": len(images.ids), "prominent": _prominent_counts(dgms, thresholds)}


def cmd_mlp_persistence(run: Run) -> dict:
    an = run.cfg["analysis"]
    images = run.analysis_images()
    schedule = ScaleSchedule(an["schedule"])
    if len(schedule) != len(images):
        raise ConfigError(f"schedule has {len(schedule)} scales for {len(images)} layers")
    tower = layerwise_tower(images, schedule, an.get("max_dim", 2))
    dgm = mlp_persistence(tower)
    _write(run.path("tower.json"), tower.to_json())
    _write(run.path("mlp_barcode.csv"), barcode_csv(dgm))
    summary = mlp_summary(dgm)
    summary["n_points"] = len(images.ids)
    summary["output_cover_size"] = len(tower.output_cover)
    summary["components_per_layer"] = [len(set(tower.components(i).values()))
                                       for i in range(len(tower))]
    return summary


def cmd_trajectories(run: Run) -> dict:
    an = run.cfg["analysis"]
    images = run.images()
    schedule = ScaleSchedule(an["schedule"])
    if len(schedule) != len(images):
        raise ConfigError(f"schedule has {len(schedule)} scales for {len(images)} layers")
    # edges only: components need no higher simplices
    tower = layerwise_tower(images, schedule, 1)
    traj = point_trajectories(tower)
    cloud = run.cloud()
    labels = dict(zip(cloud.ids.tolist(), cloud.labels.tolist()))
    _write(run.path("trajectories.json"), trajectories_json(traj))
    _write(run.path("trajectories.dot"), build_graph(traj, labels).to_dot())
    return trajectory_summary(traj, cloud, an.get("top_k", 2))


def cmd_separability(run: Run) -> dict:
    images, cloud = run.images(), run.cloud()
    labels = dict(zip(cloud.ids.tolist(), cloud.labels.tolist()))
    rep = separability_nerve_check(images[len(images) - 1], [labels[i] for i in images.ids.tolist()])
    return {"separable": rep.separable, "margin": rep.margin,
            "nerve_components": rep.nerve_components, "mixed_edges": rep.mixed_edges}


def cmd_reproduce(run: Run) -> dict:
    summary = {"config": run.cfg}
    summary["dataset"] = cmd_generate(run)
    summary["training"] = cmd_train(run)
    summary["activations"] = cmd_activations(run)
    summary["layer_persistence"] = cmd_layer_persistence(run)
    summary["mlp_persistence"] = cmd_mlp_persistence(run)
    summary["trajectories"] = cmd_trajectories(run)
    summary["separability"] = cmd_separability(run)
    _write(run.path("summary.json"), _dump(summary))
    return summary


STEPS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "activations": cmd_activations,
    "layer-persistence": cmd_layer_persistence,
    "mlp-persistence": cmd_mlp_persistence,
    "trajectories": cmd_trajectories,
    "separability": cmd_separability,
}


def _overrides(args) -> dict:
    out: dict = {}
    if getattr(args, "out", None):
        out["output_dir"] = args.out
    if getattr(args, "data", None):
        out.setdefault("dataset", {})["path"] = args.data
    if getattr(args, "data_seed", None) is not None:
        out.setdefault("dataset", {})["seed"] = args.data_seed
    if getattr(args, "seeds", None):
        out.setdefault("model", {})["seeds"] = args.seeds
    if getattr(args, "epochs", None) is not None:
        out.setdefault("train", {})["epochs"] = args.epochs
    if getattr(args, "lr", None) is not None:
        out.setdefault("train", {})["learning_rate"] = args.lr
    if getattr(args, "schedule", None):
        out.setdefault("analysis", {})["schedule"] = args.schedule
    if getattr(args, "sparsify", None) is not None:
        out.setdefault("analysis", {})["sparsify"] = args.sparsify
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="mlptopo", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("--preset", default="circles", choices=sorted(PRESETS))
        p.add_argument("--config", help="JSON config merged over the preset")
        p.add_argument("--out", help="output directory")
        p.add_argument("--data", help="path of the data table")
        p.add_argument("--data-seed", type=int)
        p.add_argument("--seeds", type=int, nargs="+", help="model seeds to sweep")
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--schedule", type=float, nargs="+", help="one scale per layer")
        p.add_argument("--sparsify", type=float, help="minimum squared distance at the input")

    for name in STEPS:
        run_options(sub.add_parser(name, parents=[common]))
    rep = sub.add_parser("reproduce", parents=[common],
                         help="run the whole pipeline and write summary.json")
    rep.add_argument("experiment", choices=sorted(PRESETS))
    run_options(rep)
    bn = sub.add_parser("bottleneck", parents=[common], help="bottleneck distance between two diagram CSV files")
    bn.add_argument("first")
    bn.add_argument("second")
    bn.add_argument("--dim", type=int, default=0)
    sub.add_parser("schema", parents=[common], help="print the config JSON schema")
    return parser


def _bottleneck(args) -> dict:
    d1 = PersistenceDiagram.from_csv(_read(Path(args.first)))
    d2 = PersistenceDiagram.from_csv(_read(Path(args.second)))
    return {"dim": args.dim, "bottleneck": bottleneck(d1, d2, args.dim)}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "schema":
            result = CONFIG_SCHEMA
        elif args.command == "bottleneck":
            result = _bottleneck(args)
        else:
            preset = args.experiment if args.command == "reproduce" else args.preset
            cfg = load_config(preset, args.config, _overrides(args))
            run = Run(cfg)
            if args.command == "reproduce":
                cmd_reproduce(run)
                result = {"summary": str(run.path("summary.json"))}
            else:
                result = STEPS[args.command](run)
    except (ConfigError, TowerError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, FileNotFoundError) as err:
        print(f"missing artifact: {err}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainingDiverged, ArithmeticError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, ModelError, ComplexError) as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
