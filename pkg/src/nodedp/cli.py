"""Command-line front end.

Subcommands: ``gen`` (synthetic graphs), ``calibrate`` (noise scale for a
target epsilon), ``train``, ``eval``, ``audit``, ``impact``. Every run
writes a ``manifest.json`` capturing the subcommand, the fully resolved
configuration, the seed, the toolkit version, and SHA-256 digests of the
input files, so a run can be replayed bit-identically.

Exit codes: 0 success, 2 usage error, 3 input-integrity or calibration
error. An optional ``--config file.json`` may provide any long-flag value
(keys use underscores); explicit flags win on conflict.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, accountant as acct, audit as audit_mod, gnn, trainer
from .errors import (
    CalibrationError,
    ConfigError,
    GraphIntegrityError,
    NodeDPError,
    ParseError,
)
from .graph import (
    NodeSplit,
    gen_erdos_renyi,
    gen_planted_classes,
    load_graph,
    save_graph,
    split_train_test,
)
from .seeding import named_streams


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: str, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_manifest(out_dir, subcommand, config, seed, inputs) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "version": __version__,
        "input_digests": {p: _sha256(p) for p in inputs if p and os.path.exists(p)},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ParseError(path, e.lineno, f"invalid JSON: {e.msg}")
    if not isinstance(cfg, dict):
        raise ParseError(path, 1, "config root must be a JSON object")
    return cfg


class _Resolver:
    """Explicit flags win; then the JSON config; then the default."""

    def __init__(self, args, config):
        self.args = vars(args)
        self.config = config

    def get(self, key, default):
        v = self.args.get(key)
        if v is not None:
            return v
        if key in self.config:
            return self.config[key]
        return default


def _ensure_out(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _positive_prob(name, value):
    if not (0.0 <= value <= 1.0):
        raise ConfigError(f"{name}={value} outside [0, 1]")
    return value


# -- subcommands -----------------------------------------------------------


def cmd_gen(args) -> int:
    out = _ensure_out(args)
    cfgf = _load_config_file(args.config)
    r = _Resolver(args, cfgf)
    model = r.get("model", "er")
    n = int(r.get("n", 100))
    d = int(r.get("dim", 8))
    seed = int(r.get("seed", 0))
    if n < 1 or d < 1:
        raise ConfigError(f"n={n} and dim={d} must be >= 1")
    rng = named_streams(seed)["data"]
    if model == "er":
        p = _positive_prob("p", float(r.get("p", 0.1)))
        classes = int(r.get("classes", 2))
        g = gen_erdos_renyi(n, p, d, classes, rng)
        config = {"model": model, "n": n, "p": p, "dim": d, "classes": classes}
    elif model == "planted":
        classes = int(r.get("classes", 4))
        separation = float(r.get("separation", 5.0))
        p_intra = _positive_prob("p_intra", float(r.get("p_intra", 0.05)))
        p_inter = _positive_prob("p_inter", float(r.get("p_inter", 0.01)))
        g = gen_planted_classes(n, classes, d, separation, p_intra, p_inter, rng)
        config = {
            "model": model,
            "n": n,
            "classes": classes,
            "dim": d,
            "separation": separation,
            "p_intra": p_intra,
            "p_inter": p_inter,
        }
    else:
        raise ConfigError(f"unknown model {model!r}")
    node_path = os.path.join(out, "nodes.csv")
    edge_path = os.path.join(out, "edges.csv")
    save_graph(g, node_path, edge_path)
    config["seed"] = seed
    _write_manifest(out, "gen", config, seed, [args.config])
    print(f"wrote {node_path} ({g.num_nodes} nodes) and {edge_path} ({g.num_edges} edges)")
    return 0


def _pmf_checksum(pmf: acct.RhoPmf) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(pmf.support).tobytes())
    h.update(np.ascontiguousarray(pmf.log_probs).tobytes())
    return h.hexdigest()[:16]


def cmd_calibrate(args) -> int:
    out = _ensure_out(args)
    cfgf = _load_config_file(args.config)
    r = _Resolver(args, cfgf)
    eps = float(r.get("eps", 0.0))
    delta = float(r.get("delta", 1e-5))
    q_b = float(r.get("qb", 0.2))
    M = float(r.get("m", 1.0))
    T = int(r.get("t", 60))
    max_dout = int(r.get("max_dout", 1000))
    noise = r.get("noise", "sml")
    enforce = bool(r.get("overlap_enforce", True))
    cfg = acct.AccountantConfig(
        q_b=q_b,
        M=M,
        iterations=T,
        delta=delta,
        max_dout=max_dout,
        enforce_no_overlap=enforce,
        noise_kind=noise,
    )
    res = acct.calibrate_sigma(eps, cfg)
    pmf = (
        acct.rho_pmf(res.argmax_dout, q_b, M)
        if enforce
        else acct.rho_pmf_no_enforce(res.argmax_dout, q_b, M)
    )
    report = {
        "sigma": res.sigma,
        "alpha": res.alpha,
        "gamma": res.gamma,
        "epsilon": res.epsilon,
        "argmax_dout": res.argmax_dout,
        "pmf_checksum": _pmf_checksum(pmf),
    }
    config = {
        "eps": eps,
        "delta": delta,
        "qb": q_b,
        "m": M,
        "t": T,
        "max_dout": max_dout,
        "noise": noise,
        "overlap_enforce": enforce,
    }
    _write_json(os.path.join(out, "calibration.json"), report)
    _write_manifest(out, "calibrate", config, int(r.get("seed", 0)), [args.config])
    print(json.dumps(report, indent=2))
    return 0


def _train_config_from(r: _Resolver) -> trainer.TrainConfig:
    sigma = r.get("sigma", None)
    eps = r.get("eps", None)
    if sigma is None and eps is None:
        raise ConfigError("one of --sigma and --eps is required")
    if sigma is not None and eps is not None:
        raise ConfigError("--sigma and --eps are mutually exclusive")
    max_dout = r.get("max_dout", None)
    return trainer.TrainConfig(
        arch=r.get("arch", gnn.ARCH_GCN),
        iterations=int(r.get("t", 60)),
        eta=float(r.get("eta", 2e-3)),
        q_b=float(r.get("qb", 0.25)),
        M=float(r.get("m", 1.0)),
        sigma=None if sigma is None else float(sigma),
        eps_target=None if eps is None else float(eps),
        delta=float(r.get("delta", 1e-5)),
        noise_kind=r.get("noise", "sml"),
        enforce_no_overlap=bool(r.get("overlap_enforce", True)),
        d_hid=int(r.get("d_hid", 128)),
        n_test=int(r.get("n_test", 5)),
        seed=int(r.get("seed", 0)),
        max_dout=None if max_dout is None else int(max_dout),
    )


def _load_input_graph(args, r: _Resolver):
    nodes = r.get("nodes", None)
    edges = r.get("edges", None)
    if nodes is None or edges is None:
        raise ConfigError("--nodes and --edges are required")
    g = load_graph(
        nodes,
        edges,
        symmetrize=bool(r.get("symmetrize", False)),
        num_classes=int(r.get("num_classes", 0)),
    )
    return g, nodes, edges


def cmd_train(args) -> int:
    out = _ensure_out(args)
    cfgf = _load_config_file(args.config)
    r = _Resolver(args, cfgf)
    g, nodes, edges = _load_input_graph(args, r)
    cfg = _train_config_from(r)
    train_frac = float(r.get("train_frac", 0.8))
    split = split_train_test(g, train_frac, named_streams(cfg.seed)["data"])
    params, report = trainer.train(g, split, cfg)
    gnn.save_params(params, os.path.join(out, "checkpoint"))
    with open(os.path.join(out, "split.json"), "w") as f:
        f.write(split.to_json())
    _write_json(os.path.join(out, "report.json"), report.to_json())
    with open(os.path.join(out, "loss.csv"), "w") as f:
        f.write(report.loss_csv())
    config = _jsonable(dataclasses.asdict(cfg))
    config["train_frac"] = train_frac
    _write_manifest(out, "train", config, cfg.seed, [nodes, edges, args.config])
    print(
        json.dumps(
            {
                "accuracy": report.accuracy,
                "mean_precision": report.mean_precision,
                "epsilon": report.to_json()["epsilon"],
                "sigma": report.sigma,
            },
            indent=2,
        )
    )
    return 0


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not np.isfinite(v):
            v = repr(v)
        out[k] = v
    return out


def cmd_eval(args) -> int:
    out = _ensure_out(args)
    cfgf = _load_config_file(args.config)
    r = _Resolver(args, cfgf)
    g, nodes, edges = _load_input_graph(args, r)
    ckpt = r.get("checkpoint", None)
    if ckpt is None:
        raise ConfigError("--checkpoint is required")
    params = gnn.load_params(ckpt)
    split_path = r.get("split", None)
    if split_path is None:
        raise ConfigError("--split is required")
    with open(split_path) as f:
        split = NodeSplit.from_json(f.read())
    mode = r.get("mode", trainer.MODE_TRANSDUCTIVE)
    cfg = trainer.TrainConfig(
        arch=params.arch,
        sigma=0.0,
        n_test=int(r.get("n_test", 5)),
        seed=int(r.get("seed", 0)),
        d_hid=params.dims[1],
    )
    test_graph = None
    test_nodes = r.get("test_nodes", None)
    if mode == trainer.MODE_INDUCTIVE:
        test_edges = r.get("test_edges", None)
        if test_nodes is None or test_edges is None:
            raise ConfigError("inductive mode requires --test-nodes and --test-edges")
        test_graph = load_graph(
            test_nodes, test_edges, symmetrize=bool(r.get("symmetrize", False)),
            num_classes=g.num_classes,
        )
    ev = trainer.evaluate(params, g, split, cfg, mode=mode, test_graph=test_graph)
    _write_json(os.path.join(out, "eval.json"), ev.to_json())
    config = {
        "mode": mode,
        "n_test": cfg.n_test,
        "seed": cfg.seed,
        "checkpoint": ckpt,
        "split": split_path,
    }
    _write_manifest(
        out, "eval", config, cfg.seed,
        [nodes, edges, ckpt + ".bin", ckpt + ".json", split_path, args.config],
    )
    print(json.dumps(ev.to_json(), indent=2))
    return 0


def cmd_audit(args) -> int:
    out = _ensure_out(args)
    cfgf = _load_config_file(args.config)
    r = _Resolver(args, cfgf)
    g, nodes, edges = _load_input_graph(args, r)
    cfg = _train_config_from(r)
    trials = int(r.get("trials", 1000))
    audited_dout = r.get("audited_dout", None)
    train_frac = float(r.get("train_frac", 0.8))
    split = split_train_test(g, train_frac, named_streams(cfg.seed)["data"])
    obs = audit_mod.run_audit(
        g, split, cfg, trials,
        audited_dout=None if audited_dout is None else int(audited_dout),
    )
    res = audit_mod.audit_result(obs, cfg.delta, float(r.get("confidence", 0.95)))
    report = res.to_json()
    report["theoretical_epsilon"] = (
        obs.theoretical_epsilon if np.isfinite(obs.theoretical_epsilon) else "inf"
    )
    report["sigma"] = obs.sigma
    report["trials"] = obs.trials
    _write_json(os.path.join(out, "audit.json"), report)
    with open(os.path.join(out, "observations.csv"), "w") as f:
        f.write(obs.to_csv())
    config = _jsonable(dataclasses.asdict(cfg))
    config.update({"trials": trials, "audited_dout": audited_dout, "train_frac": train_frac})
    _write_manifest(out, "audit", config, cfg.seed, [nodes, edges, args.config])
    print(json.dumps(report, indent=2))
    return 0


def cmd_impact(args) -> int:
    out = _ensure_out(args)
    cfgf = _load_config_file(args.config)
    r = _Resolver(args, cfgf)
    n = int(r.get("n", 100))
    p = _positive_prob("p", float(r.get("p", 0.1)))
    d = int(r.get("dim", 16))
    classes = int(r.get("classes", 10))
    chis = r.get("chi", None)
    if chis is None:
        chis = [0.1, 0.3, 0.5, 0.7, 0.9]
    elif isinstance(chis, str):
        chis = [float(x) for x in chis.split(",")]
    repeats = int(r.get("repeats", 100))
    seed = int(r.get("seed", 0))
    arch = r.get("arch", gnn.ARCH_GCN)
    rows = trainer.impact_experiment(
        n, p, d, classes, chis, repeats, seed, arch=arch,
        d_hid=int(r.get("d_hid", 16)),
    )
    table = [
        {"chi": rr.chi, "mean_delta": rr.mean_delta, "std_delta": rr.std_delta}
        for rr in rows
    ]
    _write_json(os.path.join(out, "impact.json"), table)
    with open(os.path.join(out, "impact.csv"), "w") as f:
        f.write("chi,mean_delta,std_delta\n")
        for rr in rows:
            f.write(f"{rr.chi!r},{rr.mean_delta!r},{rr.std_delta!r}\n")
    config = {
        "n": n, "p": p, "dim": d, "classes": classes, "chi": chis,
        "repeats": repeats, "arch": arch, "seed": seed,
    }
    _write_manifest(out, "impact", config, seed, [args.config])
    print(json.dumps(table, indent=2))
    return 0


# -- parser ----------------------------------------------------------------


def _add_common(p):
    p.add_argument("--out", default=None, help="output directory (default: .)")
    p.add_argument("--config", default=None, help="JSON config file; flags win")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="cap worker threads")


def _add_graph_inputs(p):
    p.add_argument("--nodes", default=None, help="node CSV (id,label,features...)")
    p.add_argument("--edges", default=None, help="edge list file ('src dst' per line)")
    p.add_argument("--symmetrize", action="store_const", const=True, default=None)
    p.add_argument("--num-classes", dest="num_classes", type=int, default=None)


def _add_train_flags(p):
    p.add_argument("--arch", choices=list(gnn.ARCHS), default=None)
    p.add_argument("--t", type=int, default=None, help="iterations")
    p.add_argument("--eta", type=float, default=None, help="learning rate")
    p.add_argument("--qb", type=float, default=None, help="base sampling rate")
    p.add_argument("--m", type=float, default=None, help="neighbor multiplier")
    p.add_argument("--sigma", type=float, default=None, help="noise scale; 0 = none")
    p.add_argument("--eps", type=float, default=None, help="target epsilon (calibrates sigma)")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--noise", choices=["sml", "gaussian"], default=None)
    p.add_argument(
        "--no-overlap-enforce",
        dest="overlap_enforce",
        action="store_const",
        const=False,
        default=None,
        help="disable central/peripheral overlap nulling",
    )
    p.add_argument("--d-hid", dest="d_hid", type=int, default=None)
    p.add_argument("--n-test", dest="n_test", type=int, default=None)
    p.add_argument("--train-frac", dest="train_frac", type=float, default=None)
    p.add_argument("--max-dout", dest="max_dout", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nodedp",
        description="Node-level differentially private GNN training toolkit",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen", help="generate a synthetic graph")
    p.add_argument("--model", choices=["er", "planted"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--p-intra", dest="p_intra", type=float, default=None)
    p.add_argument("--p-inter", dest="p_inter", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("calibrate", help="smallest sigma for a target epsilon")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--qb", type=float, default=None)
    p.add_argument("--m", type=float, default=None)
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--max-dout", dest="max_dout", type=int, default=None)
    p.add_argument("--noise", choices=["sml", "gaussian"], default=None)
    p.add_argument(
        "--no-overlap-enforce",
        dest="overlap_enforce",
        action="store_const",
        const=False,
        default=None,
    )
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="run the private training loop")
    _add_graph_inputs(p)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_graph_inputs(p)
    p.add_argument("--checkpoint", default=None, help="checkpoint path prefix")
    p.add_argument("--split", default=None, help="split.json from training")
    p.add_argument("--mode", choices=["transductive", "inductive"], default=None)
    p.add_argument("--test-nodes", dest="test_nodes", default=None)
    p.add_argument("--test-edges", dest="test_edges", default=None)
    p.add_argument("--n-test", dest="n_test", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="canary-based privacy audit")
    _add_graph_inputs(p)
    _add_train_flags(p)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--audited-dout", dest="audited_dout", type=int, default=None)
    p.add_argument("--confidence", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("impact", help="added-node gradient impact experiment")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--chi", default=None, help="comma-separated fractions")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--arch", choices=list(gnn.ARCHS), default=None)
    p.add_argument("--d-hid", dest="d_hid", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_impact)
    return ap


def _apply_threads(args) -> None:
    n = getattr(args, "threads", None)
    if n is None:
        return
    if n < 1:
        raise ConfigError(f"--threads {n} must be >= 1")
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        _apply_threads(args)
        return args.func(args)
    except (CalibrationError, GraphIntegrityError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ConfigError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except NodeDPError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
