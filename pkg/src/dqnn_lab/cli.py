"""Experiment runner: ``dqnn-lab <kind> --config <path> [--seed N] [--out DIR] [--threads N]``.

Each kind reads a TOML (or JSON) table of flat keys, runs a seeded
experiment and writes CSV files into the output directory. Exit status is
0 on success, 2 for configuration errors and 3 for numeric-validation
failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import circuit, dqgan, dqnn, graph, nfl
from .dqnn import Hyperparams, NetworkTopology
from .history import rows_to_csv
from .quantum_core import ValidationError, haar_unitary, random_hermitian

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

log = logging.getLogger("dqnn_lab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
REQUIRED = object()


class ConfigError(ValueError):
    pass


def _widths(v):
    if isinstance(v, str):
        return NetworkTopology.parse(v)
    return NetworkTopology(tuple(int(x) for x in v))


def _int_list(v):
    return [int(x) for x in v]


def _float_list(v):
    return [float(x) for x in v]


def _bool(v):
    if isinstance(v, bool):
        return v
    raise ValueError("expected true or false")


def _opt_int(v):
    return None if v is None else int(v)


# field -> (converter, default)
_COMMON = {"seed": (int, REQUIRED), "kind": (str, None)}
SCHEMAS: dict[str, dict[str, tuple[Callable, Any]]] = {
    "train": {
        "topology": (_widths, REQUIRED),
        "num_pairs": (int, 100),
        "num_train": (int, 10),
        "eps": (float, 0.01),
        "eta": (float, 1.0),
        "epochs": (int, 1000),
        "noise_delta": (float, 0.0),
        "record_every": (int, 1),
    },
    "generalisation": {
        "topology": (_widths, REQUIRED),
        "num_pairs": (int, 100),
        "s_values": (_int_list, REQUIRED),
        "seeds": (int, 10),
        "eps": (float, 0.01),
        "eta": (float, 1.0),
        "epochs": (int, 1000),
    },
    "noise": {
        "topology": (_widths, REQUIRED),
        "num_pairs": (int, 100),
        "num_train": (int, 20),
        "delta_values": (_float_list, REQUIRED),
        "seeds": (int, 10),
        "eps": (float, 0.01),
        "eta": (float, 1.0),
        "epochs": (int, 1000),
    },
    "graph": {
        "topology": (_widths, "3-1"),
        "dataset": (str, "clusters"),
        "num_vertices": (int, 10),
        "gamma_values": (_float_list, [0.0, -0.5]),
        "num_supervised": (_opt_int, None),
        "seeds": (int, 10),
        "eps": (float, 0.01),
        "eta": (float, 1.0),
        "epochs": (int, 1000),
        "embedding_file": (str, None),
        "labels_file": (str, None),
        "edges_file": (str, None),
    },
    "gan": {
        "generator": (_widths, "1-1"),
        "discriminator": (_widths, "1-1"),
        "dataset": (str, "line"),
        "pool_size": (int, 50),
        "num_train": (int, 10),
        "epochs": (int, 1000),
        "r_d": (int, 1),
        "r_g": (int, 1),
        "eps": (float, 0.01),
        "eta_d": (float, 1.0),
        "eta_g": (float, 1.0),
        "validation_samples": (int, 100),
        "histogram_samples": (int, 100),
        "verbatim_formula": (_bool, False),
        "diversity_floor": (_opt_int, None),
        "diversity_every": (int, 50),
    },
    "nfl": {
        "topology": (_widths, "2-2"),
        "s_values": (_int_list, [1, 2, 3, 4]),
        "trials": (int, 10),
        "risk_samples": (int, 10),
        "eps": (float, 0.01),
        "eta": (float, 1.0),
        "epochs": (int, 1000),
    },
    "circuit": {
        "model": (str, "dqnn"),
        "topology": (_widths, "2-2"),
        "qaoa_qubits": (int, 2),
        "qaoa_depth": (_opt_int, None),
        "num_train": (int, 4),
        "num_validation": (int, 4),
        "shots": (int, 0),
        "noise_k": (float, 0.0),
        "eps": (float, 0.05),
        "eta": (float, 0.2),
        "epochs": (int, 1000),
        "record_every": (int, 1),
    },
    "qaoa-compare": {
        "k_values": (_float_list, [0.0, 1.0, 4.0]),
        "seeds": (int, 3),
        "num_train": (int, 4),
        "num_validation": (int, 4),
        "epochs": (int, 1000),
        "dqnn_eps": (float, 0.05),
        "dqnn_eta": (float, 0.2),
        "qaoa_eps": (float, 0.05),
        "qaoa_eta": (float, 0.05),
    },
    "haar-verify": {
        "samples": (int, 100_000),
        "s2_dims": (_int_list, [2, 3]),
        "s4_dims": (_int_list, [2]),
        "moment_dim": (int, 4),
        "moment_trials": (int, 20),
        "moment_samples": (int, 20_000),
    },
}
KINDS = tuple(SCHEMAS)


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def validate_config(kind: str, raw: dict, seed: int | None = None) -> dict:
    """Apply converters and defaults; errors name the offending field."""
    if kind not in SCHEMAS:
        raise ConfigError(f"kind: unknown experiment kind {kind!r}")
    if raw.get("kind", kind) != kind:
        raise ConfigError(f"kind: config is for {raw['kind']!r}, not {kind!r}")
    schema = {**_COMMON, **SCHEMAS[kind]}
    data = dict(raw)
    if seed is not None:
        data["seed"] = seed
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field for kind {kind!r}")
    out = {}
    for name, (conv, default) in schema.items():
        if name not in data:
            if default is REQUIRED:
                raise ConfigError(f"{name}: required field missing")
            out[name] = conv(default) if default is not None else None
            continue
        try:
            out[name] = conv(data[name]) if data[name] is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    out["kind"] = kind
    _check_ranges(out)
    return out


def _check_ranges(cfg: dict) -> None:
    for name, v in cfg.items():
        values = v if isinstance(v, list) else [v]
        if any(isinstance(x, float) and not math.isfinite(x) for x in values):
            raise ConfigError(f"{name}: must be finite")
    for name in ("epochs", "seeds", "trials", "num_pairs", "num_train", "samples", "pool_size"):
        if name in cfg and cfg[name] is not None and cfg[name] < 1:
            raise ConfigError(f"{name}: must be >= 1")
    for name in ("eps", "eta", "eta_d", "eta_g"):
        if name in cfg and cfg[name] <= 0:
            raise ConfigError(f"{name}: must be > 0")
    if "num_train" in cfg and "num_pairs" in cfg and cfg["num_train"] > cfg["num_pairs"]:
        raise ConfigError("num_train: exceeds num_pairs")
    # sweeps report validation losses, so keep at least one held-out pair
    if cfg["kind"] == "noise" and cfg["num_train"] >= cfg["num_pairs"]:
        raise ConfigError("num_train: must be below num_pairs")
    if "s_values" in cfg and "num_pairs" in cfg and max(cfg["s_values"]) >= cfg["num_pairs"]:
        raise ConfigError("s_values: must stay below num_pairs")
    if cfg["kind"] == "graph" and cfg["dataset"] not in ("clusters", "line", "deepwalk"):
        raise ConfigError("dataset: expected clusters, line or deepwalk")
    if cfg["kind"] == "graph" and any(g > 0 for g in cfg["gamma_values"]):
        raise ConfigError("gamma_values: gamma must be <= 0")
    if cfg["kind"] == "gan" and cfg["dataset"] not in ("line", "clusters", "connected_clusters"):
        raise ConfigError("dataset: expected line, clusters or connected_clusters")
    if cfg["kind"] == "circuit" and cfg["model"] not in ("dqnn", "dqnn_plus", "qaoa"):
        raise ConfigError("model: expected dqnn, dqnn_plus or qaoa")


def seed_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _unitary_task(topology: NetworkTopology, n: int, rng):
    if topology.widths[0] != topology.widths[-1]:
        raise ConfigError("topology: unitary learning needs equal input and output widths")
    y = haar_unitary(2 ** topology.widths[0], rng)
    return y, dqnn.make_unitary_dataset(y, n, rng)


def _hyper(cfg) -> Hyperparams:
    return Hyperparams(cfg["eps"], cfg["eta"], cfg["epochs"])


def _warn_orthonormal(pairs) -> None:
    if len(pairs) > 1 and dqnn.is_orthonormal_inputs(pairs):
        log.warning("training inputs are mutually orthonormal; validation may not reflect generalisation")


@dataclass
class Output:
    files: dict[str, str]  # filename -> content


# --- experiment kinds -------------------------------------------------------------

def run_train(cfg) -> Output:
    rng = seed_rng(cfg["seed"])
    topo = cfg["topology"]
    _, pairs = _unitary_task(topo, cfg["num_pairs"], rng)
    train_pairs = pairs[: cfg["num_train"]]
    if cfg["noise_delta"] > 0:
        train_pairs = dqnn.add_target_noise(train_pairs, cfg["noise_delta"], rng)
    _warn_orthonormal(train_pairs)
    net = dqnn.init_random(topo, rng)
    val = pairs[cfg["num_train"]:] or None
    _, hist = dqnn.train(net, train_pairs, _hyper(cfg), val, cfg["record_every"])
    return Output({"history.csv": hist.to_csv()})


def _sweep_rows(values, run_one, seeds):
    rows = []
    for v in values:
        finals = np.array([run_one(v, i) for i in range(seeds)])
        rows.append((v, *finals.mean(axis=0), *finals.std(axis=0), seeds))
    return rows


def run_generalisation(cfg) -> Output:
    topo, hyper = cfg["topology"], _hyper(cfg)

    def one(s, i):
        rng = seed_rng(cfg["seed"], i)
        _, pairs = _unitary_task(topo, cfg["num_pairs"], rng)
        net = dqnn.init_random(topo, rng)
        net, _ = dqnn.train(net, pairs[:s], hyper, record_every=hyper.epochs)
        return dqnn.training_loss(net, pairs[:s]), dqnn.validation_loss(net, pairs[s:])

    rows = _sweep_rows(cfg["s_values"], one, cfg["seeds"])
    header = ("S", "training_loss", "validation_loss", "training_loss_std", "validation_loss_std", "seeds")
    return Output({"generalisation.csv": rows_to_csv(header, rows)})


def run_noise(cfg) -> Output:
    topo, hyper, s = cfg["topology"], _hyper(cfg), cfg["num_train"]

    def one(delta, i):
        rng = seed_rng(cfg["seed"], i)
        _, pairs = _unitary_task(topo, cfg["num_pairs"], rng)
        noisy = dqnn.add_target_noise(pairs[:s], delta, rng)
        net = dqnn.init_random(topo, rng)
        net, _ = dqnn.train(net, noisy, hyper, record_every=hyper.epochs)
        # validation against the clean unitary images
        return dqnn.training_loss(net, noisy), dqnn.validation_loss(net, pairs[s:])

    rows = _sweep_rows(cfg["delta_values"], one, cfg["seeds"])
    header = ("delta", "training_loss", "validation_loss", "training_loss_std", "validation_loss_std", "seeds")
    return Output({"noise.csv": rows_to_csv(header, rows)})


def _graph_set(cfg, rng):
    sup = cfg["num_supervised"]
    if cfg["dataset"] == "clusters":
        gset = graph.connected_clusters_dataset(rng, sup, cfg["topology"].widths[0])
    elif cfg["dataset"] == "line":
        gset = graph.line_dataset(cfg["num_vertices"], rng, sup, cfg["topology"].widths[0])
    elif not cfg["embedding_file"]:
        raise ConfigError("embedding_file: required for the deepwalk dataset")
    else:
        gset = graph.deepwalk_dataset(cfg["embedding_file"], cfg["labels_file"], cfg["edges_file"], sup, rng)
    if gset.num_supervised >= gset.n:
        raise ConfigError("num_supervised: must leave at least one validation vertex")
    return gset


def run_graph(cfg) -> Output:
    hyper = _hyper(cfg)
    rows = []
    for gamma in cfg["gamma_values"]:
        finals = []
        for i in range(cfg["seeds"]):
            # same dataset and initial network for every gamma
            rng = seed_rng(cfg["seed"], i)
            gset = _graph_set(cfg, rng)
            net = dqnn.init_random(cfg["topology"], rng)
            _, hist = graph.train_graph(net, gset, hyper, gamma, record_every=hyper.epochs)
            finals.append([hist.last(c) for c in ("training_loss", "graph_loss", "validation_loss")])
        f = np.array(finals)
        rows.append((gamma, *f.mean(axis=0), *f.std(axis=0), cfg["seeds"]))
    header = (
        "gamma", "training_loss", "graph_loss", "validation_loss",
        "training_loss_std", "graph_loss_std", "validation_loss_std", "seeds",
    )
    return Output({"graph.csv": rows_to_csv(header, rows)})


def run_gan(cfg) -> Output:
    rng = seed_rng(cfg["seed"])
    n = cfg["pool_size"]
    if cfg["dataset"] == "line":
        pool = dqgan.data_line(n)
    else:
        pool = dqgan.data_clusters(
            n, connected=cfg["dataset"] == "connected_clusters", verbatim_formula=cfg["verbatim_formula"]
        )
    pool = dqgan.shuffled(pool, cfg["num_train"], rng)
    gan = dqgan.init_random(cfg["generator"].widths, cfg["discriminator"].widths, rng)
    hyper = dqgan.GanHyper(
        cfg["epochs"], cfg["r_d"], cfg["r_g"], cfg["eps"], cfg["eta_d"], cfg["eta_g"],
        batch=cfg["num_train"], validation_samples=cfg["validation_samples"],
        diversity_floor=cfg["diversity_floor"], diversity_every=cfg["diversity_every"],
    )
    run = dqgan.train_gan(gan, pool, hyper, rng)
    hist = dqgan.diversity_histogram(run.gan, pool, cfg["histogram_samples"], rng)
    return Output({"gan_history.csv": run.history.to_csv(), "gan_histogram.csv": hist.to_csv()})


def run_nfl(cfg) -> Output:
    rng = seed_rng(cfg["seed"])
    topo = cfg["topology"]
    if topo.widths[0] != topo.widths[-1]:
        raise ConfigError("topology: needs equal input and output widths")
    d = 2 ** topo.widths[0]
    reports = nfl.nfl_experiment(topo, d, cfg["s_values"], cfg["trials"], _hyper(cfg), rng, cfg["risk_samples"])
    return Output({"nfl.csv": rows_to_csv(nfl.REPORT_COLUMNS, [r.row() for r in reports])})


def _circuit_for(model: str, cfg, rng):
    if model == "qaoa":
        c = circuit.build_qaoa_circuit(cfg.get("qaoa_qubits", 2), cfg.get("qaoa_depth"), rng)
        return c, np.zeros(c.num_params)
    widths = cfg.get("topology", NetworkTopology((2, 2))).widths
    plus = model == "dqnn_plus"
    return circuit.build_dqnn_circuit(widths, plus), circuit.dqnn_identity_params(widths, plus)


def circuit_run(model, cfg, rng, k, eps, eta, epochs, record_every=1):
    """One circuit training run with training, validation and identity losses."""
    circ, id_params = _circuit_for(model, cfg, rng)
    m = len(circ.input_qubits)
    if len(circ.output_qubits) != m:
        raise ConfigError("topology: circuit input and output widths differ")
    y = haar_unitary(2 ** m, rng)
    pairs = dqnn.make_unitary_dataset(y, cfg["num_train"] + cfg["num_validation"], rng)
    ident = dqnn.make_unitary_dataset(np.eye(2 ** m), cfg["num_train"], rng)
    noise = circuit.noise_defaults(k) if k > 0 else None
    omega, hist = circuit.train_circuit(
        circ, pairs[: cfg["num_train"]], circuit.CircuitHyper(eps, eta, epochs), cfg.get("shots", 0), noise, rng,
        validation_pairs=pairs[cfg["num_train"]:] or None, identity=(ident, id_params), record_every=record_every,
    )
    return circ, omega, hist


def run_circuit(cfg) -> Output:
    rng = seed_rng(cfg["seed"])
    circ, omega, hist = circuit_run(
        cfg["model"], cfg, rng, cfg["noise_k"], cfg["eps"], cfg["eta"], cfg["epochs"], cfg["record_every"]
    )
    params = rows_to_csv(("index", "value"), list(enumerate(omega.tolist())))
    return Output({"circuit_history.csv": hist.to_csv(), "circuit.json": circ.to_json() + "\n", "params.csv": params})


def run_qaoa_compare(cfg) -> Output:
    rows = []
    models = (("dqnn", cfg["dqnn_eps"], cfg["dqnn_eta"]), ("qaoa", cfg["qaoa_eps"], cfg["qaoa_eta"]))
    for model, eps, eta in models:
        for k in cfg["k_values"]:
            finals = []
            for i in range(cfg["seeds"]):
                # identical seed streams across k isolate the effect of noise
                rng = seed_rng(cfg["seed"], i)
                _, _, hist = circuit_run(model, cfg, rng, k, eps, eta, cfg["epochs"], cfg["epochs"])
                finals.append([hist.last(c) for c in ("training_loss", "validation_loss", "identity_loss")])
                log.info("%s k=%g seed %d: training %.4f", model, k, i, finals[-1][0])
            f = np.array(finals)
            rows.append((model, k, *f.mean(axis=0), *f.std(axis=0), cfg["seeds"]))
    header = (
        "model", "k", "training_loss", "validation_loss", "identity_loss",
        "training_loss_std", "validation_loss_std", "identity_loss_std", "seeds",
    )
    return Output({"qaoa_compare.csv": rows_to_csv(header, rows)})


def run_haar_verify(cfg) -> Output:
    rng = seed_rng(cfg["seed"])
    n = cfg["samples"]
    limit = 4 / np.sqrt(n)
    rows = []
    for d in cfg["s2_dims"]:
        rows.append(("S2", d, n, nfl.monte_carlo_s2(d, n, rng), limit))
    for d in cfg["s4_dims"]:
        rows.append(("S4", d, n, nfl.monte_carlo_s4(d, n, rng), limit))
    dm = cfg["moment_dim"]
    worst = 0.0
    for _ in range(cfg["moment_trials"]):
        x = random_hermitian(dm, rng)
        mean, se = nfl.monte_carlo_state_moment(x, cfg["moment_samples"], rng)
        worst = max(worst, abs(mean - nfl.state_moment_exact(x)) / se)
    rows.append(("state_moment_sigma", dm, cfg["moment_samples"], worst, 3.0))
    return Output({"haar.csv": rows_to_csv(("quantity", "d", "samples", "error", "limit"), rows)})


RUNNERS = {
    "train": run_train,
    "generalisation": run_generalisation,
    "noise": run_noise,
    "graph": run_graph,
    "gan": run_gan,
    "nfl": run_nfl,
    "circuit": run_circuit,
    "qaoa-compare": run_qaoa_compare,
    "haar-verify": run_haar_verify,
}


def _check_finite_csv(name: str, content: str) -> None:
    for line_no, row in enumerate(csv.reader(io.StringIO(content)), start=1):
        for cell in row:
            if cell.lower() in ("nan", "inf", "-inf"):
                raise ValidationError(f"{name} line {line_no}: non-finite value")


def run(cfg: dict, out_dir: str | Path) -> list[Path]:
    """Run a validated config and write its files; returns the written paths."""
    result = RUNNERS[cfg["kind"]](cfg)
    for name, content in result.files.items():
        if name.endswith(".csv"):
            _check_finite_csv(name, content)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, content in result.files.items():
        p = out_dir / name
        p.write_bytes(content.encode("utf-8"))
        written.append(p)
    return written


# --- summarize ---------------------------------------------------------------------

def summarize(csv_paths) -> str:
    """Mean and population stddev per numeric column, grouped by the first column.

    All inputs must share a header. Group order follows first appearance.
    """
    paths = list(csv_paths)
    if not paths:
        raise ConfigError("summarize: no input files")
    header = None
    groups: dict[str, list[list[float]]] = {}
    for p in paths:
        with open(p, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            h = next(reader, None)
            if h is None:
                raise ConfigError(f"summarize: {p} is empty")
            if header is None:
                header = h
            elif h != header:
                raise ConfigError(f"summarize: {p} header differs from {paths[0]}")
            for row in reader:
                try:
                    groups.setdefault(row[0], []).append([float(x) for x in row[1:]])
                except ValueError as exc:
                    raise ConfigError(f"summarize: non-numeric value in {p}: {exc}") from exc
    out_header = [header[0]] + [f"{c}_{s}" for c in header[1:] for s in ("mean", "std")] + ["count"]
    rows = []
    for key, vals in groups.items():
        a = np.array(vals)
        stats = [v for col in range(a.shape[1]) for v in (a[:, col].mean(), a[:, col].std())]
        rows.append((key, *stats, len(vals)))
    return rows_to_csv(out_header, rows)


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqnn-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="TOML or JSON config")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    s = sub.add_parser("summarize", help="aggregate CSVs across seeds")
    s.add_argument("csv", nargs="*")
    s.add_argument("--out", help="output file (default: stdout)")
    return parser


def _limit_threads(n: int | None):
    from contextlib import nullcontext

    if n is None:
        return nullcontext()
    if n < 1:
        raise ConfigError("threads: must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s"
    )
    try:
        if args.kind == "summarize":
            text = summarize(args.csv)
            if args.out:
                Path(args.out).write_bytes(text.encode("utf-8"))
            else:
                sys.stdout.write(text)
            return EXIT_OK
        cfg = validate_config(args.kind, load_config_file(args.config), args.seed)
        with _limit_threads(args.threads):
            log.info("running %s (seed %d)", args.kind, cfg["seed"])
            written = run(cfg, args.out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (ValidationError, ArithmeticError, FloatingPointError) as exc:
        log.error("numeric validation failed: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        # topology caps and dataset checks raise plain ValueError
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    print(json.dumps({"kind": args.kind, "files": [str(p) for p in written]}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
