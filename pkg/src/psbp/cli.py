"""Command-line driver: ``psbp fit|predict|rank|baseline|cv|ppc|synth``.

A run is configured by one JSON document (``--spec``) holding a ``model``
section (:class:`~psbp.model.ModelSpec` fields; ``"priors": "data"``
elicits the kernel prior from the response) and a ``sampler`` section
(:class:`~psbp.sampler.SamplerConfig` fields).  Flags override the document.
Every output directory gets a ``manifest.json`` with the configuration hash
and seed; nothing time-dependent is written so outputs are reproducible
byte for byte.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import evaluation, inference
from .data import bimodal_spec, clean, ingest, synth_generate
from .diagnostics import effective_sample_size
from .model import Encoder, ModelSpec, Priors
from .sampler import (FitData, PosteriorDraws, SamplerConfig, config_hash,
                      run_chain, run_chains)

log = logging.getLogger("psbp")

DRAW_DIR = "draws"


class CliError(Exception):
    pass


# -- configuration ----------------------------------------------------------

def load_config(args, data=None):
    """Build ``(ModelSpec, SamplerConfig, doc)`` from ``--spec`` and flags."""
    doc = {}
    if getattr(args, "spec", None):
        with open(args.spec, encoding="utf-8") as fh:
            doc = json.load(fh)
    model = dict(doc.get("model", {}))
    sampler = dict(doc.get("sampler", {}))
    if getattr(args, "components", None) is not None:
        model["n_components"] = args.components
    if getattr(args, "blocks", None):
        model["blocks"] = [b for b in args.blocks.split(",") if b]
    priors = model.get("priors", "data")
    if priors == "data":
        if data is None:
            raise CliError("data-elicited priors need --data")
        model["priors"] = Priors.from_data(data.y).to_dict()
    spec = ModelSpec.from_dict(model)
    for flag, key in (("iterations", "iterations"), ("burn_in", "burn_in"),
                      ("thin", "thin"), ("seed", "seed"),
                      ("checkpoint_every", "checkpoint_every")):
        v = getattr(args, flag, None)
        if v is not None:
            sampler[key] = v
    config = SamplerConfig(**sampler)
    resolved = {"model": spec.to_dict(), "sampler": config.to_dict(),
                "chains": int(getattr(args, "chains", None) or doc.get("chains", 1))}
    return spec, config, resolved


def load_data(path, do_clean=True):
    if not path:
        raise CliError("--data is required")
    data = ingest(path)
    if do_clean:
        data = clean(data)
    if len(data) == 0:
        raise CliError(f"no usable records in {path}")
    return data


def _file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_json_arg(text):
    if text is None:
        return None
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(text)


def _grid(text):
    if not text:
        return inference.DEFAULT_GRID
    lo, hi, n = text.split(",")
    return np.linspace(float(lo), float(hi), int(n))


# -- table writers ----------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path, doc):
    inference.write_report(path, doc)


def _matrix_rows(iters, M):
    for it, row in zip(iters, M):
        yield [int(it)] + list(row)


def write_draws(out, draws):
    """One CSV per parameter block; floats are written round-trip exact."""
    d = os.path.join(out, DRAW_DIR)
    os.makedirs(d, exist_ok=True)
    files = []
    L = draws.mu.shape[1]
    comp = [f"c{l}" for l in range(L)]
    blocks = [("mu", draws.mu, comp), ("phi", draws.phi, comp),
              ("level", draws.level, comp)]
    for b, v in draws.theta.items():
        blocks.append((f"theta_{b}", v, [f"k{k}" for k in range(v.shape[1])]))
    eps_names = sorted(draws.eps)
    eps = np.column_stack([draws.eps[k] for k in eps_names]) if eps_names \
        else np.zeros((len(draws), 0))
    blocks.append(("eps", eps, eps_names))
    for name, M, cols in blocks:
        fn = os.path.join(d, f"{name}.csv")
        write_table(fn, ["iteration"] + cols, _matrix_rows(draws.iterations, M))
        files.append(f"{DRAW_DIR}/{name}.csv")
    return files


def _read_matrix(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not body:
        return header[1:], np.zeros(0, dtype=np.int64), np.zeros((0, len(header) - 1))
    a = np.array([[float(x) for x in r] for r in body])
    return header[1:], a[:, 0].astype(np.int64), a[:, 1:]


def load_fit(path):
    """Read a fit directory back into ``(PosteriorDraws, manifest)``."""
    mpath = os.path.join(path, "manifest.json")
    if not os.path.exists(mpath):
        raise CliError(f"no fit manifest in {path}")
    with open(mpath, encoding="utf-8") as fh:
        manifest = json.load(fh)
    spec = ModelSpec.from_dict(manifest["config"]["model"])
    with open(os.path.join(path, "encoder.json"), encoding="utf-8") as fh:
        enc = Encoder.from_dict(spec, json.load(fh))
    d = os.path.join(path, DRAW_DIR)
    _, iters, mu = _read_matrix(os.path.join(d, "mu.csv"))
    _, _, phi = _read_matrix(os.path.join(d, "phi.csv"))
    _, _, level = _read_matrix(os.path.join(d, "level.csv"))
    theta = {b: _read_matrix(os.path.join(d, f"theta_{b}.csv"))[2] for b in spec.blocks}
    names, _, eps = _read_matrix(os.path.join(d, "eps.csv"))
    draws = PosteriorDraws(enc, mu, phi, level, theta,
                           {k: eps[:, i] for i, k in enumerate(names)}, iters)
    return draws, manifest


# -- fit summaries ----------------------------------------------------------

def posterior_summary(draws):
    rows = []

    def add(name, x):
        lo, hi = np.quantile(x, [0.025, 0.975])
        rows.append([name, x.mean(), x.std(ddof=1) if len(x) > 1 else 0.0,
                     lo, hi, effective_sample_size(x)])

    L = draws.mu.shape[1]
    for l in range(L):
        add(f"mu[{l}]", draws.mu[:, l])
    for l in range(L):
        add(f"phi[{l}]", draws.phi[:, l])
    for l in range(L - 1):
        add(f"level[{l}]", draws.level[:, l])
    for b, v in draws.theta.items():
        free = draws.encoder.free_mask(b)
        for k in np.nonzero(free)[0]:
            add(f"{b}[{k}]", v[:, k])
    for k in sorted(draws.eps):
        add(f"eps[{k}]", draws.eps[k])
    return rows


def occupancy(draws, fd, threshold=0.01):
    """Mean stick weight of each component over records and draws."""
    w = inference.row_mixtures(draws, fd.design).weights.mean(axis=0)
    return [(l, w[l], bool(w[l] > threshold)) for l in range(len(w))]


# -- commands ---------------------------------------------------------------

def cmd_fit(args):
    data = load_data(args.data, not args.no_clean)
    spec, config, resolved = load_config(args, data)
    out = _outdir(args)
    fd = FitData.from_dataset(data, spec)
    n_chains = resolved["chains"]
    if args.resume:
        chains = [run_chain(fd, config, checkpoint=_ckpt(out, config), resume=args.resume)]
    elif n_chains == 1:
        chains = [run_chain(fd, config, checkpoint=_ckpt(out, config))]
    else:
        chains = run_chains(fd, config, n_chains, args.workers)
    draws = PosteriorDraws.concat(chains)
    files = write_draws(out, draws)
    write_json(os.path.join(out, "encoder.json"), fd.encoder.to_dict())
    write_table(os.path.join(out, "summary.csv"),
                ["parameter", "mean", "sd", "lower", "upper", "ess"],
                posterior_summary(draws))
    occ = occupancy(draws, fd)
    write_table(os.path.join(out, "occupancy.csv"),
                ["component", "mean_weight", "active"], occ)
    files += ["encoder.json", "summary.csv", "occupancy.csv"]
    manifest = _manifest(resolved, args, data, files, out)
    manifest["fit"] = {"n_draws": len(draws), "n_active": sum(o[2] for o in occ),
                       "swap_rate": float(np.mean([c.swap_rate for c in chains]))}
    write_json(os.path.join(out, "manifest.json"), manifest)
    print(f"fit: {len(draws)} draws, {manifest['fit']['n_active']} active "
          f"components -> {out}")
    return 0


def _ckpt(out, config):
    return os.path.join(out, "checkpoint.npz") if config.checkpoint_every else None


def cmd_predict(args):
    draws, manifest = load_fit(args.fit)
    xs = _parse_json_arg(args.x)
    if xs is None:
        raise CliError("--x is required")
    if isinstance(xs, dict):
        xs = [xs]
    out = _outdir(args)
    grid = _grid(args.grid)
    loss = _loss(args)
    report = []
    for i, x in enumerate(xs):
        est = inference.predictive_density(x, draws, grid)
        est.write_csv(os.path.join(out, f"density_{i}.csv"))
        report.append({"x": x, "table": f"density_{i}.csv",
                       "integral": est.integral(),
                       "loss": inference.expected_loss(est, loss).to_dict()})
    _report(out, "predict", manifest, {"loss": vars(loss), "predictions": report})
    return 0


def _loss(args):
    kind = {"threshold-exceed": "threshold"}.get(args.loss, args.loss)
    return inference.LossSpec(kind, args.C, args.tau)


def cmd_rank(args):
    draws, manifest = load_fit(args.fit)
    out = _outdir(args)
    loss = _loss(args)
    demand = _parse_json_arg(args.demand) or {}
    if args.suppliers:
        data = load_data(args.data, not args.no_clean)
        res = []
        for a in draws.encoder.levels["airline"]:
            fixed = dict(demand, airline=a)
            try:
                est = inference.marginal_density(fixed, draws, data, seed=manifest["seed"])
            except inference.InferenceError as exc:
                log.warning("%s", exc)
                continue
            res.append((inference.expected_loss(est, loss).mean, a,
                        inference.expected_loss(est, loss)))
        res.sort(key=lambda r: (r[0], r[1]))
        rows = [[a, iv.mean, iv.lower, iv.upper] for _, a, iv in res]
        write_table(os.path.join(out, "ranking.csv"),
                    ["airline", "loss_mean", "loss_lower", "loss_upper"], rows)
        _report(out, "rank", manifest, {"loss": vars(loss), "demand": demand,
                                        "suppliers": [r[0] for r in rows]})
        return 0
    cands = _parse_json_arg(args.candidates)
    if not cands:
        raise CliError("--candidates is required")
    ranked = inference.optimal_service(demand, cands, loss, draws)
    write_table(os.path.join(out, "ranking.csv"),
                ["service", "loss_mean", "loss_lower", "loss_upper", "prob_best"],
                [[r.service_id, r.loss.mean, r.loss.lower, r.loss.upper, r.prob_best]
                 for r in ranked])
    _report(out, "rank", manifest, {"loss": vars(loss), "demand": demand,
                                    "ranking": [r.to_dict() for r in ranked]})
    return 0


def cmd_baseline(args):
    draws, manifest = load_fit(args.fit)
    data = load_data(args.data, not args.no_clean)
    out = _outdir(args)
    grid = _grid(args.grid)
    rows, doc = [], []
    for a in draws.encoder.levels["airline"]:
        est = inference.baseline_distribution(a, draws, data, grid, args.weighting)
        est.write_csv(os.path.join(out, f"baseline_{a}.csv"))
        try:
            r = inference.overage_underage_ratio(est)
            rows.append([a, est.cdf_at(0.0), r.mean, r.lower, r.upper])
            doc.append({"airline": a, "F0": est.cdf_at(0.0), "ratio": r.to_dict()})
        except inference.InferenceError as exc:
            rows.append([a, est.cdf_at(0.0), "nan", "nan", "nan"])
            doc.append({"airline": a, "F0": est.cdf_at(0.0), "error": str(exc)})
    write_table(os.path.join(out, "ratios.csv"),
                ["airline", "F0", "ratio_mean", "ratio_lower", "ratio_upper"], rows)
    _report(out, "baseline", manifest, {"weighting": args.weighting, "airlines": doc})
    return 0


def cmd_cv(args):
    data = load_data(args.data, not args.no_clean)
    spec, config, resolved = load_config(args, data)
    out = _outdir(args)
    seed = config.seed
    scorer_cache = {}

    def scorer(s):
        key = s.blocks
        if key not in scorer_cache:
            scorer_cache[key] = evaluation.cross_validate(
                data, s, config, args.folds, seed, args.workers)
        return scorer_cache[key].neg_ll

    if args.select:
        final, base, steps = evaluation.backward_select(spec, scorer)
        doc = {"initial_blocks": list(spec.blocks), "initial_neg_ll": base,
               "steps": [s.to_dict() for s in steps], "selected": list(final.blocks)}
    else:
        scorer(spec)
        doc = {}
    reports = [scorer_cache[k] for k in scorer_cache]
    write_table(os.path.join(out, "cv.csv"),
                ["blocks"] + [f"fold{k}_ll" for k in range(args.folds)] + ["neg_ll"],
                [["+".join(r.blocks)] + list(r.fold_ll) + [r.neg_ll] for r in reports])
    doc["reports"] = [r.to_dict() for r in reports]
    _report(out, "cv", _manifest(resolved, args, data, ["cv.csv"], out), doc)
    return 0


def cmd_ppc(args):
    draws, manifest = load_fit(args.fit)
    data = load_data(args.data, not args.no_clean)
    out = _outdir(args)
    seed = manifest["seed"] if args.seed is None else args.seed
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(101,))))
    reports = {"psbp": evaluation.ppc_statistics(data, draws, rng, args.replicates)}
    if args.lm:
        lm = evaluation.fit_linear_baseline(data, blocks=draws.spec.blocks)
        reports["lm"] = evaluation.ppc_statistics(data, lm, rng, args.replicates or len(draws))
    rows = [[m, r.statistic, r.observed, r.mean, r.lower, r.upper, r.inside]
            for m, rs in reports.items() for r in rs]
    write_table(os.path.join(out, "ppc.csv"),
                ["model", "statistic", "observed", "mean", "lower", "upper", "inside"], rows)
    _report(out, "ppc", manifest, {m: [r.to_dict() for r in rs] for m, rs in reports.items()})
    return 0


def cmd_synth(args):
    out = _outdir(args)
    seed = 0 if args.seed is None else args.seed
    sp = bimodal_spec(seed=seed, n_per_cell=args.n_per_cell)
    data, truth = synth_generate(sp)
    data.to_csv(os.path.join(out, "data.csv"))
    write_json(os.path.join(out, "truth.json"), truth.to_dict())
    write_json(os.path.join(out, "manifest.json"),
               {"command": "synth", "seed": seed, "n_records": len(data),
                "config_hash": config_hash(truth.to_dict(), {"n_per_cell": args.n_per_cell}),
                "files": {f: _file_digest(os.path.join(out, f))
                          for f in ("data.csv", "truth.json")}})
    print(f"synth: {len(data)} records -> {out}")
    return 0


def _outdir(args):
    if not args.out:
        raise CliError("--out is required")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _manifest(resolved, args, data, files, out):
    return {
        "command": args.command,
        "config": resolved,
        "config_hash": config_hash(resolved),
        "seed": resolved["sampler"]["seed"],
        "data": {"path": os.path.basename(args.data),
                 "sha256": _file_digest(args.data), "n_records": len(data)},
        "files": {f: _file_digest(os.path.join(out, f)) for f in files},
    }


def _report(out, command, manifest, body):
    doc = {"command": command, "config_hash": manifest.get("config_hash"),
           "seed": manifest.get("seed"), **body}
    write_json(os.path.join(out, f"{command}.json"), doc)


# -- argument parsing -------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="psbp", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sampler=True):
        sp.add_argument("--data")
        sp.add_argument("--spec", help="JSON run configuration")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--no-clean", action="store_true",
                        help="skip the record filters before fitting")
        if sampler:
            sp.add_argument("--iterations", type=int)
            sp.add_argument("--burn-in", type=int)
            sp.add_argument("--thin", type=int)
            sp.add_argument("--components", type=int)
            sp.add_argument("--blocks", help="comma-separated predictor blocks")
            sp.add_argument("--chains", type=int)
            sp.add_argument("--checkpoint-every", type=int)

    def loss(sp):
        sp.add_argument("--loss", default="linear",
                        choices=["linear", "threshold", "threshold-exceed", "quadratic"])
        sp.add_argument("--C", type=float, default=1.0)
        sp.add_argument("--tau", type=float, default=18.0)

    sp = sub.add_parser("fit", help="run the Gibbs sampler and write a draw archive")
    common(sp)
    sp.add_argument("--resume", help="checkpoint file to continue from")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="predictive density tables")
    common(sp, sampler=False)
    sp.add_argument("--fit", required=True)
    sp.add_argument("--x", help="JSON setting(s) or a file holding them")
    sp.add_argument("--grid", help="lo,hi,n")
    loss(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("rank", help="rank services or suppliers by expected loss")
    common(sp, sampler=False)
    sp.add_argument("--fit", required=True)
    sp.add_argument("--demand", help="JSON demand settings")
    sp.add_argument("--candidates", help="JSON {id: settings} of services")
    sp.add_argument("--suppliers", action="store_true",
                    help="rank airlines by the density marginal over the data")
    loss(sp)
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("baseline", help="airline baselines and overage/underage ratios")
    common(sp, sampler=False)
    sp.add_argument("--fit", required=True)
    sp.add_argument("--grid")
    sp.add_argument("--weighting", default="uniform", choices=["uniform", "frequency"])
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("cv", help="k-fold cross-validated log-likelihood")
    common(sp)
    sp.add_argument("--folds", type=int, default=3)
    sp.add_argument("--select", action="store_true", help="run backward elimination")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("ppc", help="posterior predictive checks")
    common(sp, sampler=False)
    sp.add_argument("--fit", required=True)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--lm", action="store_true", help="also check the OLS comparator")
    sp.set_defaults(func=cmd_ppc)

    sp = sub.add_parser("synth", help="write a synthetic multimodal dataset")
    common(sp, sampler=False)
    sp.add_argument("--n-per-cell", type=int, default=250)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (CliError, ValueError, KeyError, OSError) as exc:
        print(f"psbp {args.command}: error: {exc}", file=sys.stderr)
        return 2

