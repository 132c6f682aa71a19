"""Command-line interface.

    steamgen simulate     write a simulated dataset, its schema and a DGP sidecar
    steamgen generate     fit a generator on a real CSV and sample a synthetic CSV
    steamgen evaluate     score a synthetic CSV against a real one
    steamgen benchmark    run a named sweep and write long-format results
    steamgen dp-generate  differentially private generation with a budget ledger

Settings come from ``--config FILE`` (YAML mapping) and per-key flags, flags
winning. Unknown keys are rejected. Exit codes: 0 success, 2 usage or
validation error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .data import (ParseError, SchemaError, ValidationError, as_seed, load_csv, load_schema,
                   save_csv, save_schema)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def _int(v):
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(v)


def _float(v):
    if isinstance(v, bool):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "false", "yes", "no", "1", "0"):
        return v.lower() in ("true", "yes", "1")
    raise ValueError(f"expected a boolean, got {v!r}")


def _str(v):
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _opt(conv):
    return lambda v: None if v is None or v == "none" else conv(v)


def _list(conv):
    def parse(v):
        if isinstance(v, str):
            v = [s for s in v.split(",") if s.strip()]
        if not isinstance(v, (list, tuple)):
            raise ValueError(f"expected a list, got {v!r}")
        return [conv(x.strip() if isinstance(x, str) else x) for x in v]
    return parse


# key -> (converter, default, help)
GEN_KEYS = {
    "generator": (_str, "marginal_hist", "covariate generator: marginal_hist or gmm"),
    "bins": (_int, 32, "histogram bins"),
    "gmm_components": (_int, 5, "mixture components"),
    "em_max_iters": (_int, 200, "EM iteration cap"),
    "em_tolerance": (_float, 1e-6, "EM stopping tolerance on mean log-likelihood"),
    "classifier": (_str, "logistic", "propensity classifier: logistic or logistic_poly2"),
    "regressor": (_str, "gbt", "outcome regressor: gbt or ridge"),
    "outcome_param": (_str, "s", "outcome parameterisation: s (one regressor) or t (per arm)"),
    "noise": (_bool, True, "add residual noise to outcome predictions"),
}

KEYS = {
    "simulate": {
        "d": (_int, 10, "covariate dimension"),
        "n": (_int, 2000, "rows"),
        "propensity": (_str, "quadratic_mean", "quadratic_mean, linear_mean or constant"),
        "k_w": (_int, 2, "covariates in the propensity"),
        "p": (_float, 0.5, "constant propensity"),
        "prognostic": (_list(_int), [1, 2], "prognostic covariate indices (1-based)"),
        "predictive": (_list(_int), [3, 4], "predictive covariate indices (1-based)"),
        "k_y": (_opt(_int), None, "predictive range 3..K_y (overrides predictive)"),
        "sigma": (_float, 1.0, "outcome noise sd"),
    },
    "generate": {
        "real": (_opt(_str), None, "real CSV"),
        "schema": (_opt(_str), None, "schema file"),
        "model": (_str, "steam", "steam, joint or steam_jointxw"),
        "model_file": (_opt(_str), None, "sample from a saved model instead of fitting"),
        "n": (_opt(_int), None, "synthetic rows (default: real rows)"),
        "known_propensity": (_opt(_float), None, "fix the assignment probability"),
        **GEN_KEYS,
    },
    "evaluate": {
        "real": (_opt(_str), None, "real CSV"),
        "synth": (_opt(_str), None, "synthetic CSV"),
        "schema": (_opt(_str), None, "schema file"),
        "metrics": (_list(_str), ["all"], "metric names, 'all' or 'baseline'"),
        "repeats": (_int, 20, "repeats with derived seeds"),
        "kinds": (_list(_str), ["S", "T", "RA", "DR"], "CATE learner family"),
        "regressor": (_str, "gbt", "CATE stage regressor"),
        "classifier": (_str, "logistic", "JSD_pi classifier"),
        "dump_cate": (_bool, False, "write per-row CATE estimates"),
    },
    "benchmark": {
        "sweep": (_opt(_str), None, "sweep name"),
        "repeats": (_int, 10, "seeds per grid cell"),
        "n": (_int, 2000, "rows per simulated dataset"),
        "values": (_opt(_list(_float)), None, "override the knob grid"),
        "generator": (_str, "marginal_hist", "STEAM covariate generator"),
        "joint_generator": (_str, "gmm", "joint baseline generator"),
        "gmm_components": (_int, 5, "mixture components"),
        "classifier": (_str, "logistic_poly2", "propensity classifier (generator and metric)"),
        "classifier_lambda": (_float, 0.1, "classifier L2 strength"),
        "regressor": (_str, "gbt", "outcome and CATE regressor"),
    },
    "dp-generate": {
        "real": (_opt(_str), None, "real CSV"),
        "schema": (_opt(_str), None, "schema file"),
        "epsilon": (_float, 1.0, "total epsilon"),
        "delta": (_float, 0.0, "total delta (carried, not consumed)"),
        "weights": (_list(_float), [1 / 3, 1 / 3, 1 / 3], "budget weights wx,ww,wy"),
        "n": (_opt(_int), None, "synthetic rows"),
        "bins": (_int, 32, "histogram bins"),
        "logistic_lambda": (_float, 0.01, "DP logistic L2 strength"),
        "ridge_lambda": (_float, 1.0, "DP ridge L2 strength"),
        "y_bound": (_float, 10.0, "public outcome bound"),
    },
}


def resolve_config(command: str, file_cfg: dict, flags: dict) -> dict:
    spec = KEYS[command]
    unknown = sorted(set(file_cfg) - set(spec))
    if unknown:
        raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    out = {}
    for key, (conv, default, _) in spec.items():
        raw = flags[key] if flags.get(key) is not None else file_cfg.get(key, default)
        try:
            out[key] = None if raw is None else conv(raw)
        except (TypeError, ValueError) as e:
            raise UsageError(f"config key {key!r}: {e}") from None
    return out


def _metadata(command, cfg, seed) -> dict:
    return {"tool": "steamgen", "version": __version__, "command": command,
            "seed": int(seed.root), "config": cfg}


def _comments(meta) -> list[str]:
    return [f"steamgen {meta['version']} {meta['command']}", f"seed: {meta['seed']}",
            "config: " + json.dumps(meta["config"], sort_keys=True)]


def _digest(meta) -> str:
    return hashlib.sha256(json.dumps(meta, sort_keys=True).encode()).hexdigest()[:16]


def _write_yaml(path: Path, doc):
    path.write_text(yaml.safe_dump(doc, sort_keys=False))


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"missing required setting {k!r}")


def _load_real(cfg, key="real"):
    schema = load_schema(cfg["schema"])
    return load_csv(cfg[key], schema), schema


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg, seed, out: Path):
    from .simulate import DgpConfig, describe, simulate

    try:
        dgp = DgpConfig(d=cfg["d"], n=cfg["n"], propensity=cfg["propensity"], k_w=cfg["k_w"],
                        p=cfg["p"], prognostic=tuple(cfg["prognostic"]),
                        predictive=tuple(cfg["predictive"]), sigma=cfg["sigma"])
        if cfg["k_y"] is not None:
            dgp = dgp.with_predictive_range(cfg["k_y"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    meta = _metadata("simulate", cfg, seed)
    ds = simulate(dgp, seed)
    save_csv(ds, out / "data.csv", _comments(meta))
    save_schema(ds.schema, out / "schema.yaml", meta)
    _write_yaml(out / "dgp.yaml", {**meta, "dgp": {**dgp.__dict__, "prognostic": list(dgp.prognostic),
                                                  "predictive": list(dgp.predictive)},
                                   "oracle": describe(dgp)})
    return f"wrote {ds.n} rows x {ds.d + 2} columns to {out / 'data.csv'}"


def _gen_config(cfg, seed):
    from .generators import GenConfig
    from .learners import TrainConfig

    try:
        return GenConfig(generator=cfg["generator"], bins=cfg["bins"], gmm_components=cfg["gmm_components"],
                         em_max_iters=cfg["em_max_iters"], em_tolerance=cfg["em_tolerance"],
                         classifier=cfg["classifier"], regressor=cfg["regressor"],
                         outcome_param=cfg["outcome_param"], noise=cfg["noise"],
                         train=TrainConfig(seed=seed.derive("train")), seed=seed.derive("generator"))
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_generate(cfg, seed, out: Path):
    from .generators import FixedPropensity, fit_joint_baseline, fit_steam, fit_steam_ablation_jointxw
    from .serialize import load_document, save_model

    meta = _metadata("generate", cfg, seed)
    if cfg["model_file"]:
        model, _ = load_document(Path(cfg["model_file"]).read_text())
        n = cfg["n"]
        if n is None:
            raise UsageError("n is required when sampling from a saved model")
    else:
        _need(cfg, "real", "schema")
        real, _ = _load_real(cfg)
        if cfg["model"] not in ("steam", "joint", "steam_jointxw"):
            raise UsageError(f"unknown model {cfg['model']!r}")
        gcfg = _gen_config(cfg, seed)
        if cfg["model"] == "steam":
            model = fit_steam(real, gcfg, cfg["known_propensity"])
        elif cfg["model"] == "joint":
            model = fit_joint_baseline(real, gcfg)
        else:
            model = fit_steam_ablation_jointxw(real, gcfg)
        n = cfg["n"] or real.n
    synth = model.generate(n, seed.derive("sample"))
    qw = getattr(model, "qw", None)
    meta["generation"] = {
        "model": type(model).__name__,
        "propensity": (f"FixedPropensity({qw.p})" if isinstance(qw, FixedPropensity)
                       else type(qw).__name__ if qw is not None else "joint"),
        "n": int(n),
    }
    save_csv(synth, out / "synthetic.csv", _comments(meta))
    save_schema(synth.schema, out / "schema.yaml", meta)
    save_model(model, out / "model.json", meta)
    _write_yaml(out / "generation.yaml", meta)
    return f"wrote {n} synthetic rows to {out / 'synthetic.csv'}"


def cmd_evaluate(cfg, seed, out: Path):
    from .cate import CateConfig, CateFamilyConfig
    from .metrics import ALL_METRICS, BASELINE, JsdConfig, evaluate, fit_cate_family, MetricError

    _need(cfg, "real", "synth", "schema")
    real, schema = _load_real(cfg)
    synth = load_csv(cfg["synth"], schema)
    metrics = []
    for m in cfg["metrics"]:
        if m == "all":
            metrics += list(ALL_METRICS)
        elif m in ALL_METRICS or m == BASELINE:
            metrics.append(m)
        else:
            raise UsageError(f"unknown metric {m!r}")
    try:
        family = CateFamilyConfig(tuple(cfg["kinds"]), CateConfig(regressor=cfg["regressor"]))
        jcfg = JsdConfig(cfg["classifier"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    meta = _metadata("evaluate", cfg, seed)
    rep = evaluate(real, synth, tuple(dict.fromkeys(metrics)), cfg["repeats"], seed, family, jcfg)
    rep.metadata.update({"version": __version__, "config_digest": _digest(meta)})
    header = "".join(f"# {c}\n" for c in _comments(meta))
    (out / "report.txt").write_text(header + rep.to_text())
    flat = {"tool": "steamgen", "version": __version__, "seed": str(seed.root),
            "config": json.dumps(cfg, sort_keys=True), "config_digest": _digest(meta), **rep.to_flat()}
    (out / "report.kv").write_text("".join(f"{k}={v}\n" for k, v in flat.items()))
    if cfg["dump_cate"]:
        fam = CateFamilyConfig(family.kinds, family.learner, seed.derive("repeat", 0).derive("family"))
        for side, ds in (("real", real), ("synth", synth)):
            try:
                models = fit_cate_family(ds, fam, side)
            except MetricError as e:
                print(f"cate dump skipped for {side}: {e}", file=sys.stderr)
                continue
            cols = [models[k].predict(real.X) for k in fam.kinds]
            lines = ["# " + c for c in _comments(meta)] + [",".join(f"tau_{k}" for k in fam.kinds)]
            lines += [",".join(format(v, ".17g") for v in row) for row in np.column_stack(cols)]
            (out / f"cate_{side}.csv").write_text("\n".join(lines) + "\n")
    if not rep.values:
        raise RuntimeError("every metric failed: " + "; ".join(f"{k}: {v}" for k, v in rep.failures.items()))
    return rep.to_text()


def cmd_benchmark(cfg, seed, out: Path):
    from .benchmark import SWEEPS, BenchConfig, rows_to_csv, run_sweep, summarize, summary_to_csv
    from .learners import TrainConfig

    _need(cfg, "sweep")
    if cfg["sweep"] not in SWEEPS:
        raise UsageError(f"unknown sweep {cfg['sweep']!r}; choose from {', '.join(SWEEPS)}")
    bench = BenchConfig(n=cfg["n"], repeats=cfg["repeats"], generator=cfg["generator"],
                        joint_generator=cfg["joint_generator"], gmm_components=cfg["gmm_components"],
                        classifier=cfg["classifier"], classifier_lambda=cfg["classifier_lambda"],
                        regressor=cfg["regressor"], train=TrainConfig())
    meta = _metadata("benchmark", cfg, seed)
    workers = int(os.environ.get("STEAMGEN_THREADS", "1") or 1)
    rows = run_sweep(cfg["sweep"], seed, bench, cfg["values"], workers=workers,
                     progress=lambda msg: print(msg, file=sys.stderr))
    header = "".join(f"# {c}\n" for c in _comments(meta))
    (out / "results.csv").write_text(header + rows_to_csv(rows))
    summ = summarize(rows)
    (out / "summary.csv").write_text(header + summary_to_csv(summ))
    return f"wrote {len(rows)} rows to {out / 'results.csv'}"


def cmd_dp_generate(cfg, seed, out: Path):
    from .privacy import BudgetSplit, DpConfig, PrivacyBudget, dp_steam
    from .serialize import save_model

    _need(cfg, "real", "schema")
    try:
        budget = PrivacyBudget(cfg["epsilon"], cfg["delta"])
        if budget.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if len(cfg["weights"]) != 3:
            raise ValueError("weights need three values wx,ww,wy")
        split = BudgetSplit(*cfg["weights"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    real, _ = _load_real(cfg)
    dcfg = DpConfig(bins=cfg["bins"], logistic_lambda=cfg["logistic_lambda"],
                    ridge_lambda=cfg["ridge_lambda"], y_bound=cfg["y_bound"])
    model, ledger = dp_steam(real, budget, split, dcfg, seed.derive("mechanisms"))
    n = cfg["n"] or real.n
    synth = model.generate(n, seed.derive("sample"))
    meta = _metadata("dp-generate", cfg, seed)
    save_csv(synth, out / "synthetic.csv", _comments(meta))
    save_schema(synth.schema, out / "schema.yaml", meta)
    save_model(model, out / "model.json", meta)
    header = "".join(f"# {c}\n" for c in _comments(meta))
    (out / "ledger.csv").write_text(header + ledger.to_text())
    t = ledger.total
    return f"wrote {n} rows; budget consumed epsilon={t.epsilon!r} delta={t.delta!r}"


COMMANDS = {"simulate": cmd_simulate, "generate": cmd_generate, "evaluate": cmd_evaluate,
            "benchmark": cmd_benchmark, "dp-generate": cmd_dp_generate}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="steamgen", description="Treatment-aware synthetic data generation and evaluation")
    p.add_argument("--version", action="version", version=f"steamgen {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, spec in KEYS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--seed", type=int, default=None, help="root seed (default 0)")
        sp.add_argument("--out", default=None, help="output directory (default .)")
        for key, (conv, default, help_) in spec.items():
            flag = "--" + key.replace("_", "-")
            if conv is _bool:
                sp.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None, help=help_)
            else:
                sp.add_argument(flag, dest=key, default=None, help=f"{help_} (default {default!r})")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        file_cfg = {}
        if args.config:
            try:
                file_cfg = yaml.safe_load(Path(args.config).read_text()) or {}
            except (OSError, yaml.YAMLError) as e:
                raise UsageError(f"cannot read config: {e}") from None
            if not isinstance(file_cfg, dict):
                raise UsageError("config file must be a mapping")
        reserved = {"seed", "out"}
        seed_v = args.seed if args.seed is not None else file_cfg.get("seed", 0)
        out_v = args.out if args.out is not None else file_cfg.get("out", ".")
        file_cfg = {k: v for k, v in file_cfg.items() if k not in reserved}
        flags = {k: v for k, v in vars(args).items() if k in KEYS[args.command]}
        cfg = resolve_config(args.command, file_cfg, flags)
        try:
            seed = as_seed(_int(seed_v))
        except ValueError as e:
            raise UsageError(f"seed: {e}") from None
        out = Path(out_v)
        out.mkdir(parents=True, exist_ok=True)
        msg = COMMANDS[args.command](cfg, seed, out)
        if msg:
            print(msg)
        return EXIT_OK
    except (UsageError, SchemaError, ValidationError, ParseError, FileNotFoundError) as e:
        print(f"steamgen: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        print(f"steamgen: runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
