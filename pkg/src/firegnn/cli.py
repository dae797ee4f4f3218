"""Command line driver: synth -> build-graph -> train -> predict -> eval -> communities -> attribute.

Every stage reads its inputs from files written by the previous one, so the
stages can be rerun one at a time. All settings live in one JSON config;
missing keys take the defaults below and unknown keys are an error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attribution, community, forecast, graph, grid, metrics, model, synth, train

log = logging.getLogger("firegnn.cli")

DATA_DIR_ENV = "FIREGNN_DATA_DIR"


@dataclass
class PathsSection:
    data_dir: str | None = None  # falls back to $FIREGNN_DATA_DIR, then ./data
    out_dir: str | None = None   # falls back to <data_dir>/run


@dataclass
class SynthSection:
    lat_count: int = 12
    lon_count: int = 16
    months: int = 120
    members: int = 5
    seed: int = 0
    noise: float = 0.05


@dataclass
class GraphSection:
    quantile: float = 0.10


@dataclass
class ModelSection:
    widths: list = field(default_factory=lambda: [16, 32, 64])
    layers: list = field(default_factory=lambda: [1, 2])
    window: int = 12
    horizon: int = 12
    activation: str = "sigmoid"


@dataclass
class TrainSection:
    lr: float = 0.001
    epochs: int = 1000
    batch: int = 12
    patience: int = 50
    seed: int = 0
    clip_norm: float | None = 5.0
    train_members: list = field(default_factory=lambda: [1, 2, 3, 5])
    val_member: int = 5
    val_fraction: float = 0.2
    months: int | None = None  # only the first ``months`` of each series are used for training


@dataclass
class PredictSection:
    member: int = synth.TEST_MEMBER
    start: int = 12
    years: int | None = None  # None: as many whole years as the data allow


@dataclass
class LouvainSection:
    resolution: float = 1.06
    seed: int = 0


@dataclass
class IgSection:
    steps: int = 50
    sample: int = 500
    horizons: list = field(default_factory=lambda: [0, 10])
    nodes: list = field(default_factory=lambda: [0])
    seed: int = 0


@dataclass
class RunConfig:
    paths: PathsSection = field(default_factory=PathsSection)
    synth: SynthSection = field(default_factory=SynthSection)
    graph: GraphSection = field(default_factory=GraphSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    predict: PredictSection = field(default_factory=PredictSection)
    louvain: LouvainSection = field(default_factory=LouvainSection)
    ig: IgSection = field(default_factory=IgSection)

    def validate(self) -> "RunConfig":
        checks = [
            (0 < self.graph.quantile < 1, "graph.quantile must be in (0, 1)"),
            (bool(self.model.widths) and all(int(w) >= 1 for w in self.model.widths),
             "model.widths must be a non-empty list of positive ints"),
            (bool(self.model.layers) and all(int(n) >= 1 for n in self.model.layers),
             "model.layers must be a non-empty list of positive ints"),
            (self.model.activation in model.ACTIVATIONS, f"model.activation must be one of {sorted(model.ACTIVATIONS)}"),
            (self.train.lr > 0, "train.lr must be > 0"),
            (self.train.epochs >= 1 and self.train.batch >= 1, "train.epochs and train.batch must be >= 1"),
            (self.train.patience >= 0, "train.patience must be >= 0"),
            (0 <= self.train.val_fraction < 1, "train.val_fraction must be in [0, 1)"),
            (self.louvain.resolution > 0, "louvain.resolution must be > 0"),
            (self.ig.steps >= 1 and self.ig.sample >= 1, "ig.steps and ig.sample must be >= 1"),
            (self.predict.start >= self.model.window, "predict.start must be >= model.window"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"config: {msg}")
        synth.SynthConfig(self.synth.lat_count, self.synth.lon_count, self.synth.months, self.synth.members)
        for h in self.ig.horizons:
            if not 0 <= h < self.model.horizon:
                raise ValueError(f"config: ig.horizons entry {h} outside 0..{self.model.horizon - 1}")
        return self

    def data_dir(self) -> Path:
        return Path(self.paths.data_dir or os.environ.get(DATA_DIR_ENV) or "data")

    def out_dir(self) -> Path:
        return Path(self.paths.out_dir) if self.paths.out_dir else self.data_dir() / "run"

    def with_seed(self, seed: int) -> "RunConfig":
        for section in (self.synth, self.train, self.louvain, self.ig):
            section.seed = seed
        return self


def _fill(cls, values, where):
    if not isinstance(values, dict):
        raise ValueError(f"config: {where or 'top level'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ValueError(f"config: unknown key(s) {', '.join(where + k for k in unknown)}")
    kwargs = {}
    for name, value in values.items():
        default = known[name].default_factory() if known[name].default_factory is not dataclasses.MISSING \
            else known[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _fill(type(default), value, f"{where}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return _fill(RunConfig, json.loads(path.read_text()), "").validate()


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n"


# --- file layout -------------------------------------------------------------

def _mask_path(data_dir):
    return Path(data_dir) / "mask"


def _climate_path(data_dir, name):
    return Path(data_dir) / f"climate_{name}"


def _fire_path(data_dir, member):
    return Path(data_dir) / f"fire_member{member}"


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing input {path}")
    return path


@dataclass
class Dataset:
    mask: grid.LandMask
    climate: list          # four (N, months) arrays, normalized
    fire: dict             # member -> (N, months), normalized
    normalization: dict    # variable -> NormalizationParams

    def series(self, member: int) -> np.ndarray:
        if member not in self.fire:
            raise FileNotFoundError(f"no fire series for ensemble member {member}")
        return grid.stack_features(self.climate, self.fire[member])

    @property
    def months(self) -> int:
        return self.climate[0].shape[1]


def load_dataset(data_dir) -> Dataset:
    """Read mask, climate and every ``fire_member*`` file; min-max normalize each variable.

    Fire is normalized with one range pooled over all members.
    """
    data_dir = Path(data_dir)
    mask = grid.read_mask(_require(_mask_path(data_dir).with_suffix(".json")))
    climate, norm = [], {}
    for name in grid.CLIMATE_FEATURES:
        images, _ = grid.read_grid(_require(_climate_path(data_dir, name).with_suffix(".json")))
        nodes = grid.mask_snapshot(images, mask).T
        params = grid.fit_normalization(nodes)
        climate.append(grid.apply_normalization(nodes, params))
        norm[name] = params
    raw = {}
    for desc in sorted(data_dir.glob("fire_member*.json")):
        member = int(desc.stem[len("fire_member"):])
        images, _ = grid.read_grid(desc)
        raw[member] = grid.mask_snapshot(images, mask).T
    if not raw:
        raise FileNotFoundError(f"missing input {_fire_path(data_dir, 1).with_suffix('.json')} (no fire members)")
    params = grid.fit_normalization(*raw.values())
    norm["P"] = params
    fire = {k: grid.apply_normalization(v, params) for k, v in raw.items()}
    months = {a.shape[1] for a in climate} | {a.shape[1] for a in fire.values()}
    if len(months) != 1:
        raise ValueError(f"{data_dir}: series lengths disagree: {sorted(months)}")
    return Dataset(mask, climate, fire, norm)


def _model_config(cfg: RunConfig, width: int, layers: int) -> model.ModelConfig:
    return model.ModelConfig(gcn_out=width, lstm_layers=layers, lstm_hidden=width, window=cfg.model.window,
                             horizon=cfg.model.horizon, gcn_activation=cfg.model.activation)


def _graph_path(out_dir):
    return Path(out_dir) / "graph.edges"


def _load_graph(out_dir) -> graph.WildfireGraph:
    return graph.read_edgelist(_require(_graph_path(out_dir)))


def split_windows(cfg: RunConfig, data: Dataset):
    """Training windows from every training member; the validation member's
    last ``val_fraction`` of months is held out for validation."""
    t = cfg.train
    w, h = cfg.model.window, cfg.model.horizon
    months = data.months if t.months is None else min(t.months, data.months)
    parts, val = [], None
    for member in t.train_members:
        series = data.series(member)
        if member == t.val_member and t.val_fraction > 0:
            cut = months - int(round(t.val_fraction * months))
            parts.append(train.make_windows(series, w, h, 0, cut))
            # validation targets lie entirely in the held-out tail
            val = train.make_windows(series, w, h, max(cut - w, 0), months)
        else:
            parts.append(train.make_windows(series, w, h, 0, months))
    windows = train.Windows.concat(parts)
    if len(windows) == 0:
        raise ValueError(f"no training windows: {months} months cannot hold window {w} + horizon {h}")
    return windows, val


# --- commands ----------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> None:
    s = cfg.synth
    world = synth.generate(synth.SynthConfig(s.lat_count, s.lon_count, s.months, s.members, s.seed, noise=s.noise))
    out = cfg.data_dir()
    out.mkdir(parents=True, exist_ok=True)
    grid.write_mask(_mask_path(out), world.mask)
    for name in grid.CLIMATE_FEATURES:
        grid.write_grid(_climate_path(out, name), grid.inflate(world.climate[name].T, world.mask), name)
    for member in world.members:
        grid.write_grid(_fire_path(out, member.id), grid.inflate(member.fire.T, world.mask), "P")
    print(f"wrote {world.mask.node_count} land nodes x {s.months} months, {len(world.members)} members to {out}")


def cmd_build_graph(cfg: RunConfig) -> None:
    data = load_dataset(cfg.data_dir())
    months = data.months if cfg.train.months is None else min(cfg.train.months, data.months)
    burnt = np.concatenate([data.series(m)[:, 4, :months] for m in cfg.train.train_members], axis=1)
    tau = graph.compute_threshold(burnt, cfg.graph.quantile)
    g = graph.build_adjacency(burnt, tau)
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    graph.write_edgelist(_graph_path(out), g)
    print(f"tau={tau:.6f} nodes={g.node_count} edges={g.edge_count} -> {_graph_path(out)}")


def cmd_train(cfg: RunConfig) -> None:
    data = load_dataset(cfg.data_dir())
    out = cfg.out_dir()
    g = _load_graph(out)
    adj = graph.normalize_adjacency(g)
    train_w, val_w = split_windows(cfg, data)
    t = cfg.train
    tc = train.TrainConfig(epochs=t.epochs, batch_size=t.batch, patience=t.patience, seed=t.seed, lr=t.lr,
                           clip_norm=t.clip_norm)
    candidates = [_model_config(cfg, int(width), int(layers))
                  for layers in cfg.model.layers for width in cfg.model.widths]
    best, best_model, results = train.grid_search(adj, train_w, val_w, candidates[0], tc, candidates)
    model.save_checkpoint(out / "model", best_model)
    with open(out / "grid.csv", "w") as fh:
        fh.write("layers,width,val_mse\n")
        for c, val in results:
            fh.write(f"{c.lstm_layers},{c.lstm_hidden},{val!r}\n")
    print(f"{len(train_w)} training windows; selected layers={best.lstm_layers} width={best.lstm_hidden} "
          f"-> {out / 'model.bin'}")


def _rollout_setup(cfg: RunConfig, data: Dataset):
    p = cfg.predict
    block = cfg.model.window
    years = p.years if p.years is not None else (data.months - p.start) // block
    if years < 1:
        raise ValueError(f"no whole year to forecast after month {p.start} of {data.months}")
    series = data.series(p.member)
    plan = forecast.RolloutPlan(p.start, years, series[:, :4])
    return series, plan


def cmd_predict(cfg: RunConfig) -> None:
    data = load_dataset(cfg.data_dir())
    out = cfg.out_dir()
    adj = graph.normalize_adjacency(_load_graph(out))
    m = model.load_checkpoint(_require(out / "model.json").with_suffix(""))
    series, plan = _rollout_setup(cfg, data)
    pred = forecast.rollout(m, adj, grid.feature_window(series, plan.start, m.config.window), plan)
    stop = plan.start + pred.shape[1]
    grid.write_grid(out / "pred", grid.inflate(pred.T, data.mask), "P")
    grid.write_grid(out / "truth", grid.inflate(series[:, 4, plan.start:stop].T, data.mask), "P")
    print(f"forecast member {cfg.predict.member} months {plan.start}..{stop - 1} -> {out / 'pred.bin'}")


def cmd_eval(cfg: RunConfig, pred_path=None, truth_path=None, land_only=False) -> metrics.MetricReport:
    out = cfg.out_dir()
    pred, _ = grid.read_grid(Path(pred_path) if pred_path else out / "pred")
    truth, _ = grid.read_grid(Path(truth_path) if truth_path else out / "truth")
    if land_only:
        mask = grid.read_mask(_require(_mask_path(cfg.data_dir()).with_suffix(".json")))
        pred, truth = grid.mask_snapshot(pred, mask), grid.mask_snapshot(truth, mask)
    overall = metrics.report(pred, truth)
    yearly = metrics.yearly_report(pred, truth) if pred.shape[0] % 12 == 0 else []
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_report_csv(out / "metrics.csv", overall, yearly)
    table = metrics.format_table({"GCN-LSTM": overall})
    (out / "metrics.txt").write_text(table)
    print(table, end="")
    return overall


def cmd_communities(cfg: RunConfig) -> community.Partition:
    out = cfg.out_dir()
    g = _load_graph(out)
    part, q = community.louvain(g, community.LouvainConfig(cfg.louvain.resolution, cfg.louvain.seed))
    community.write_partition(out / "communities.csv", part)
    community.write_summary(out / "community_summary.csv", community.community_summary(g, part))
    mask_desc = _mask_path(cfg.data_dir()).with_suffix(".json")
    if mask_desc.exists():
        mask = grid.read_mask(mask_desc)
        if mask.node_count == part.node_count:
            grid.write_grid(out / "community_map", community.community_map(part, mask)[None], "community")
    print(f"{part.community_count} communities, Q={q:.6f} -> {out / 'communities.csv'}")
    return part


def cmd_attribute(cfg: RunConfig) -> None:
    data = load_dataset(cfg.data_dir())
    out = cfg.out_dir()
    adj = graph.normalize_adjacency(_load_graph(out))
    m = model.load_checkpoint(_require(out / "model.json").with_suffix(""))
    series, plan = _rollout_setup(cfg, data)
    w = m.config.window
    # one input block per forecast year of the test member, observed fire
    blocks = np.stack([grid.feature_window(series, plan.start + w * k, w) for k in range(plan.years)])
    sample = min(cfg.ig.sample, data.mask.node_count)
    if sample < cfg.ig.sample:
        log.info("ig.sample %d exceeds %d nodes; using every node", cfg.ig.sample, sample)
    for h in cfg.ig.horizons:
        scores, stats = attribution.feature_importance(m, adj, blocks, sample, h, cfg.ig.seed, cfg.ig.steps)
        attribution.write_box_summary(out / f"importance_h{h}.csv", stats)
        with open(out / f"importance_samples_h{h}.csv", "w") as fh:
            fh.write(",".join(grid.FEATURES) + "\n")
            for row in scores:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        medians = " ".join(f"{k}={s['median']:+.4g}" for k, s in stats.items())
        print(f"horizon {h}: median attribution {medians}")
    for node in cfg.ig.nodes:
        for h in cfg.ig.horizons:
            ig = attribution.integrated_gradients(m, adj, blocks[0], attribution.IgConfig(node, h, cfg.ig.steps))
            attribution.write_attributions(out / f"attribution_n{node}_h{h}.csv", ig)
            grid.write_grid(out / f"attribution_map_n{node}_h{h}",
                            grid.inflate(ig.sum(axis=(1, 2)), data.mask)[None], "attribution")
    print(f"attributions -> {out}")


COMMANDS = {
    "synth": cmd_synth,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "communities": cmd_communities,
    "attribute": cmd_attribute,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (defaults apply to missing keys)")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--threads", type=int, default=1, help="BLAS thread limit (1 = deterministic)")
    common.add_argument("--data-dir", help=f"input data directory (default ${DATA_DIR_ENV} or ./data)")
    common.add_argument("--out-dir", help="artifact directory (default <data-dir>/run)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="firegnn", description="Graph-recurrent burnt-area forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "eval":
            p.add_argument("--land-only", action="store_true", help="score land nodes only")
            p.add_argument("--pred", help="prediction grid (default <out-dir>/pred)")
            p.add_argument("--truth", help="truth grid (default <out-dir>/truth)")
    sub.add_parser("show-config", parents=[common], help="print the effective config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.with_seed(args.seed)
        if args.data_dir:
            cfg.paths.data_dir = args.data_dir
        if args.out_dir:
            cfg.paths.out_dir = args.out_dir
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
        if args.command == "show-config":
            print(dump_config(cfg), end="")
            return 0
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=args.threads):
            if args.command == "eval":
                cmd_eval(cfg, args.pred, args.truth, args.land_only)
            else:
                COMMANDS[args.command](cfg)
    except (FileNotFoundError, ValueError, IndexError, KeyError, FloatingPointError) as exc:
        print(f"firegnn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
