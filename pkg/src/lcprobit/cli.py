"""Command-line front end: ``lcprobit <command> ...``.

Every command writes its outputs plus a ``manifest.json`` listing their hashes
into an output directory. Commands that consume a fit directory verify those
hashes and the dataset fingerprint before doing anything.

Exit codes: 0 success, 2 validation / input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .comparison import NumericalError, chib_marginal_likelihood
from .inference import (
    autocorrelation, average_category_probs, covariate_effect, effective_sample_size,
    summarize, summarize_matrix,
)
from .model import ContractError, DomainError
from .samplers import SAMPLERS, PosteriorSample, relabel
from .simulate import SimSpec, builtin_setting, generate

log = logging.getLogger("lcprobit")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
DRAWS, SUMMARY = "draws.csv", "summary.json"
DIAG_LAGS = 40


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _derived_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint32)[0])


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    if (args.setting is None) == (args.spec_file is None):
        raise ContractError("give exactly one of --setting or --spec-file")
    if args.setting is not None:
        spec = builtin_setting(args.setting, seed=args.seed, n=args.n or 1200)
    else:
        doc = io.read_json(args.spec_file)
        allowed = {"alpha_true", "beta_true", "sigma2_true", "n", "J", "delta_true",
                   "x_means", "x_vars", "name"}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise io.DataError(f"{args.spec_file}: unknown field(s) {unknown}")
        if args.n:
            doc["n"] = args.n
        for key in ("x_means", "x_vars"):
            if key in doc:
                doc[key] = tuple(doc[key])
        spec = SimSpec(seed=args.seed, **doc)
    out = generate(spec)
    d = _out_dir(args.out)
    io.write_dataset(d / "data.csv", out.dataset)
    io.write_matrix_csv(d / "truth.csv", ["s_true", "z_true"],
                        np.column_stack([out.s_true, out.z_true]))
    io.write_manifest(d, "simulate", ["data.csv", "truth.csv"],
                      spec=spec.to_dict(), class_cond_means=list(out.class_cond_means),
                      dataset_sha256=io.sha256_file(d / "data.csv"),
                      label_map={str(j): j for j in range(1, spec.J + 1)})
    print(f"wrote {out.dataset.n} rows to {d / 'data.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit

def _load_config(path) -> io.FitConfig:
    return io.FitConfig.load(path) if path else io.FitConfig()


def _load_for_config(data_path, cfg: io.FitConfig) -> io.LoadedData:
    return io.load_dataset(data_path, cfg.x_columns, cfg.w_columns, cfg.categories)


def _config_echo(cfg: io.FitConfig, prior, run) -> dict:
    return {"prior": io.prior_to_dict(prior), "run": vars(run).copy(),
            "x_columns": cfg.x_columns, "w_columns": cfg.w_columns,
            "categories": cfg.categories, "name": cfg.name}


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    loaded = _load_for_config(args.data, cfg)
    data = loaded.dataset
    prior = cfg.prior_spec(data.p, data.q, data.J)
    run = cfg.run_config(args.seed)
    log.info("fitting n=%d p=%d q=%d J=%d with the %s sampler (%d sweeps)",
             data.n, data.p, data.q, data.J, args.sampler, run.n_iter)
    t0 = time.perf_counter()
    sample = relabel(SAMPLERS[args.sampler](data, prior, run))
    elapsed = time.perf_counter() - t0
    names, values = sample.flat()
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite values in posterior draws")
    d = _out_dir(args.out)
    io.write_matrix_csv(d / DRAWS, names, values)
    table = summarize(sample)
    io.write_json(d / SUMMARY, {**table.to_dict(), "label_map": loaded.label_map,
                                "x_names": data.x_names, "w_names": data.w_names})
    io.write_manifest(
        d, "fit", [DRAWS, SUMMARY],
        dataset_sha256=loaded.sha256, dataset_path=str(Path(args.data).name),
        label_map=loaded.label_map, config=_config_echo(cfg, prior, run),
        sampler=args.sampler, accept_rate_alpha=sample.accept_rate_alpha,
        swap_fraction=sample.swap_fraction, timing={"wall_seconds": elapsed},
    )
    print(f"wrote {sample.G} draws to {d / DRAWS} "
          f"(alpha acceptance {sample.accept_rate_alpha:.3f}, "
          f"relabel swaps {sample.swap_fraction:.3f})")
    return EXIT_OK


def _load_fit(fit_dir, data_path=None):
    man = io.read_verified(fit_dir, required=[DRAWS])
    if man.get("command") != "fit":
        raise io.ManifestError(f"{fit_dir}: manifest is from {man.get('command')!r}, not fit")
    names, values = io.read_matrix_csv(Path(fit_dir) / DRAWS)
    sample = PosteriorSample.from_flat(names, values, relabeled=True,
                                       sampler=man.get("sampler", "collapsed"))
    loaded = None
    if data_path is not None:
        conf = man.get("config", {})
        cfg = io.FitConfig(x_columns=conf.get("x_columns"), w_columns=conf.get("w_columns"),
                           categories=conf.get("categories"))
        loaded = _load_for_config(data_path, cfg)
        io.check_dataset_matches(man, loaded, fit_dir)
        if sample.beta.shape[2] != loaded.dataset.q or sample.alpha.shape[1] != loaded.dataset.p:
            raise io.ManifestError("draws and dataset dimensions disagree")
    return man, sample, loaded


def _prob_columns(prefix_fmt, label_map):
    labels = sorted(label_map, key=label_map.get)
    return [prefix_fmt.format(s=s + 1, lab=lab) for s in range(2) for lab in labels]


# ---------------------------------------------------------------------------
# effects / avgprob

def _resolve_covariate(spec: str, data) -> int:
    if spec in data.x_names:
        return data.x_names.index(spec) + 1
    try:
        k = int(spec)
    except ValueError:
        raise ContractError(f"unknown covariate {spec!r}; choose one of {data.x_names} "
                            f"or an index 1..{data.q - 1}") from None
    return k


def _distribution_summary(draws, columns) -> dict:
    flat = draws.reshape(draws.shape[0], -1)
    q = np.quantile(flat, [0.025, 0.5, 0.975], axis=0)
    return {c: {"mean": float(flat[:, i].mean()), "sd": float(flat[:, i].std(ddof=1)),
                "q025": float(q[0, i]), "median": float(q[1, i]), "q975": float(q[2, i])}
            for i, c in enumerate(columns)}


def cmd_effects(args) -> int:
    man, sample, loaded = _load_fit(args.fit, args.data)
    data = loaded.dataset
    k = _resolve_covariate(args.covariate, data)
    eff = covariate_effect(sample, data, k)
    cols = _prob_columns("class{s}_y{lab}", loaded.label_map)
    d = _out_dir(args.out)
    io.write_matrix_csv(d / "effects.csv", cols, eff.draws.reshape(sample.G, -1))
    closure = float(np.abs(eff.draws.sum(axis=2)).max())
    io.write_json(d / "effects.json", {
        "covariate": eff.name, "column": k, "perturbation": eff.perturbation,
        "label_map": loaded.label_map, "summary": _distribution_summary(eff.draws, cols),
        "max_abs_category_sum": closure})
    io.write_manifest(d, "effects", ["effects.csv", "effects.json"],
                      fit_run_id=man["run_id"], fit_manifest_sha256=io.sha256_file(
                          Path(args.fit) / io.MANIFEST),
                      dataset_sha256=loaded.sha256, covariate=eff.name)
    print(f"covariate effects of {eff.name} written to {d}")
    return EXIT_OK


def cmd_avgprob(args) -> int:
    man, sample, loaded = _load_fit(args.fit, args.data)
    avg = average_category_probs(sample, loaded.dataset)
    cols = _prob_columns("class{s}_y{lab}", loaded.label_map)
    d = _out_dir(args.out)
    io.write_matrix_csv(d / "avgprob.csv", cols, avg.draws.reshape(sample.G, -1))
    io.write_json(d / "avgprob.json", {"label_map": loaded.label_map,
                                       "summary": _distribution_summary(avg.draws, cols)})
    io.write_manifest(d, "avgprob", ["avgprob.csv", "avgprob.json"],
                      fit_run_id=man["run_id"], fit_manifest_sha256=io.sha256_file(
                          Path(args.fit) / io.MANIFEST),
                      dataset_sha256=loaded.sha256)
    print(f"average category probabilities written to {d}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diag

def diag_tables(names, values, max_lag=DIAG_LAGS):
    G = values.shape[0]
    lag = min(max_lag, G - 1)
    acf = np.full((lag, len(names)), np.nan)
    ess = {}
    for i, nm in enumerate(names):
        x = values[:, i]
        if np.ptp(x) == 0:
            ess[nm] = None
            continue
        acf[:, i] = autocorrelation(x, lag)[1:]
        ess[nm] = effective_sample_size(x)
    return acf, ess


def cmd_diag(args) -> int:
    man, sample, _ = _load_fit(args.fit)
    names, values = sample.flat()
    acf, ess = diag_tables(names, values)
    d = _out_dir(args.out)
    lags = np.arange(1, acf.shape[0] + 1)[:, None]
    io.write_matrix_csv(d / "acf.csv", ["lag", *names], np.hstack([lags, acf]))
    io.write_json(d / "diag.json", {
        "G": sample.G, "ess": ess,
        "acf": {nm: (None if np.isnan(acf[0, i]) else acf[:, i].tolist())
                for i, nm in enumerate(names)},
        "summary": summarize_matrix(names, values).to_dict()
        if sample.G >= 100 else None})
    io.write_manifest(d, "diag", ["acf.csv", "diag.json"], fit_run_id=man["run_id"],
                      fit_manifest_sha256=io.sha256_file(Path(args.fit) / io.MANIFEST))
    print(f"diagnostics for {len(names)} parameters written to {d}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare

def _fit_and_chib(data_path, config_path, seed):
    cfg = _load_config(config_path)
    loaded = _load_for_config(data_path, cfg)
    data = loaded.dataset
    prior = cfg.prior_spec(data.p, data.q, data.J)
    run = cfg.run_config(seed)
    t0 = time.perf_counter()
    sample = relabel(SAMPLERS["collapsed"](data, prior, run))
    res = chib_marginal_likelihood(data, prior, run, sample)
    if not np.isfinite(res.log_ml):
        raise NumericalError(f"{config_path}: non-finite log marginal likelihood")
    return {"config": str(config_path), "name": cfg.name or Path(config_path).stem,
            "seed": seed, "x_columns": data.x_names, "w_columns": data.w_names,
            "accept_rate_alpha": sample.accept_rate_alpha,
            "swap_fraction": sample.swap_fraction,
            "wall_seconds": time.perf_counter() - t0, **res.to_dict()}, loaded.sha256


def cmd_compare(args) -> int:
    seeds = [_derived_seed(args.seed, i) for i in range(len(args.configs))]
    jobs = [(args.data, c, s) for c, s in zip(args.configs, seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_fit_and_chib, *zip(*jobs)))
    else:
        results = [_fit_and_chib(*j) for j in jobs]
    models = [r for r, _ in results]
    log_ml = np.array([m["log_ml"] for m in models])
    bf = {f"{a['name']}_vs_{b['name']}": float(a["log_ml"] - b["log_ml"])
          for i, a in enumerate(models) for j, b in enumerate(models) if i < j}
    best = int(np.argmax(log_ml))
    d = _out_dir(args.out)
    io.write_json(d / "compare.json", {
        "models": models, "log_bayes_factors": bf, "selected": models[best]["name"],
        "note": "Bayes factors only; multiply by prior model odds to get posterior odds"})
    io.write_manifest(d, "compare", ["compare.json"], master_seed=args.seed,
                      dataset_sha256=results[0][1],
                      configs=[io.sha256_file(c) for c in args.configs])
    for m in models:
        print(f"{m['name']}: log-ml {m['log_ml']:.3f} (MC s.e. {m['mc_se']:.3f})")
    print(f"selected: {models[best]['name']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lcprobit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset with ground truth")
    p.add_argument("--setting", type=int, choices=(1, 2))
    p.add_argument("--spec-file", help="JSON with SimSpec fields")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="sample the posterior")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--sampler", choices=sorted(SAMPLERS), default="collapsed")
    p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    for name, func, helptext in (("effects", cmd_effects, "covariate effects"),
                                 ("avgprob", cmd_avgprob, "average category probabilities")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--fit", required=True, help="output directory of a fit run")
        p.add_argument("--data", required=True)
        if name == "effects":
            p.add_argument("--covariate", required=True, help="x column name or index")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("compare", help="marginal likelihoods and Bayes factors")
    p.add_argument("--data", required=True)
    p.add_argument("--configs", nargs="+", required=True)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diag", help="ACF and ESS tables")
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diag)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ContractError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
