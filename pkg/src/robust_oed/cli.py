"""``oed`` command-line front end.

Subcommands: ``build-model``, ``optimize``, ``evaluate``, ``scenarios`` and
``protocol`` (the end-to-end robust-versus-classical study on one model).
All randomness derives from ``--seed``; every run writes ``manifest.json``.
Exit codes: 0 success, 2 config error, 3 ill-posed, 4 combinatorial guard.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, criteria, optimizer, postproc, scenarios
from . import structural_model as sm
from .errors import InvalidConfigError, OEDError
from .inverse import Design, NoiseModel, ScenarioSet

MODES = ("classical", "robust-oneout", "robust-pof", "robust-clipping")
THETA0_MEAN = (4e1, 5e2, 2e0, 1.2e1, 6e2, 8e1)
THETA0_STD = 6.0


# ---------------------------------------------------------------------------
# helpers


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.notes = {}

    def path(self, name):
        p = self.out / name
        self.outputs.append(name)
        return p

    def write_manifest(self, config_hash=None):
        files = {}
        for name in self.outputs:
            p = self.out / name
            if p.exists():
                files[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        manifest = {
            "command": self.args.command,
            "argv": sys.argv[1:],
            "config": str(self.args.config),
            "config_hash": config_hash,
            "seed": self.args.seed,
            "version": __version__,
            "dry_run": bool(self.args.dry_run),
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "outputs": files,
            "notes": self.notes,
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _say(args, msg):
    if not args.quiet:
        print(msg, flush=True)


def load_problem(args):
    config = sm.load_model_config(args.config)
    model = sm.assemble_tiered_model(config)
    frf = sm.compute_frf(model, config.frequency, config.extraction_mode)
    return config, model, frf


def save_design(path, design, **extra):
    data = {**design.to_dict(), **extra}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True, default=_plain)
        fh.write("\n")


def load_design(path):
    with open(path) as fh:
        data = json.load(fh)
    try:
        return Design.from_dict(data)
    except (KeyError, ValueError) as exc:
        raise InvalidConfigError(f"{path}: malformed design file ({exc})") from exc


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _level_rule(text):
    try:
        rule = json.loads(text)
        return {int(k): float(v) for k, v in rule.items()}
    except (ValueError, AttributeError) as exc:
        raise InvalidConfigError(f"--level-rule must be a JSON object level->q, got {text!r}") from exc


def _noise(config):
    return NoiseModel(config.noise_sigma)


def _clipping(args, model, frf):
    levels = model.sensor_levels()
    std = args.force_std
    if std is None:
        std = scenarios.tune_force_std(frf, levels, args.threshold, args.n_realizations,
                                       args.seed, target_rate=args.clip_target)
    clip = scenarios.ClippingConfig.isotropic(args.threshold, frf.n_theta, std, args.n_realizations, args.seed)
    masks, occurrence = scenarios.clipping_scenarios(frf, clip)
    return clip, masks, occurrence


def build_criterion(mode, args, model, frf, noise):
    if mode == "classical":
        return criteria.Criterion.classical(noise), {}
    if mode == "robust-oneout":
        return criteria.Criterion.scenario_avg(scenarios.one_out_scenarios(frf.n_y), noise), {}
    if mode == "robust-pof":
        pof = scenarios.tiered_pof(model, _level_rule(args.level_rule))
        return criteria.Criterion.pof(pof.survival, noise), {"level_rule": pof.level_rule}
    if mode == "robust-clipping":
        clip, masks, occ = _clipping(args, model, frf)
        info = {"force_std": math.sqrt(clip.force_covariance[0, 0]), "threshold_g": clip.threshold,
                "tier_rates": scenarios.tier_rates(occ, model.sensor_levels())}
        return criteria.Criterion.scenario_avg(masks, noise), info
    raise InvalidConfigError(f"unknown mode {mode!r}")


def optimizer_config(args, sweep=False):
    iters = args.sweep_max_iters if sweep else args.max_iters
    return optimizer.OptimizerConfig(max_iters=iters, grad_tol=args.grad_tol, seed=args.seed)


def sweep_config(args):
    return optimizer.GammaSweepConfig(args.gamma_min, args.gamma_max, args.gamma_count, args.binary_tol)


def run_optimize(run, args, model, frf, mode, criterion, tag=None):
    """Fractional (gamma = 0) solve or gamma sweep; writes design, trace and sweep report."""
    tag = tag or mode
    if not args.budget > 0:
        raise InvalidConfigError(f"budget must be positive, got {args.budget}")
    design0 = Design.uniform(frf.n_y, args.budget)
    cfg = optimizer_config(args, sweep=not args.fractional)
    if args.fractional:
        res = optimizer.solve_relaxed(frf, criterion, design0, 0.0, cfg)
        design, gamma, sel = res.design, 0.0, res
        value = criteria.evaluate(criterion, frf, design)
    else:
        sw = optimizer.gamma_sweep(frf, criterion, design0, sweep_config(args), cfg, threads=args.threads)
        sw.write_report(run.path(f"sweep_{tag}.csv"))
        design = sw.design
        if sw.fallback:
            sel = min(sw.results, key=lambda r: r.criterion)
            gamma = sel.gamma
        else:
            sel = sw.results[sw.selected_index]
            gamma = sel.gamma
        value = criteria.evaluate(criterion, frf, design, illposed_policy="exclude")
    sel.write_trace(run.path(f"trace_{tag}.csv"))
    save_design(run.path(f"design_{tag}.json"), design, criterion=value, gamma=gamma, seed=args.seed,
                mode=mode, fractional=bool(args.fractional),
                fallback=bool(not args.fractional and sw.fallback), warning=sel.warning)
    return design, value


# ---------------------------------------------------------------------------
# commands


def cmd_build_model(args, run):
    config = sm.load_model_config(args.config)
    if args.dry_run:
        return config
    model = sm.assemble_tiered_model(config)
    frf = sm.compute_frf(model, config.frequency, config.extraction_mode)
    sm.save_model(model, run.path("model.npz"))
    sm.write_frf_csv(frf, run.path("frf.csv"))
    s = np.linalg.svd(frf.entries, compute_uv=False)
    run.notes.update(n_y=frf.n_y, n_theta=frf.n_theta, condition_number=float(s[0] / s[-1]))
    _say(args, f"n_y={frf.n_y} n_theta={frf.n_theta} cond(T)={s[0] / s[-1]:.4g} "
               f"frequency={config.frequency} mode={config.extraction_mode}")
    return config


def cmd_optimize(args, run):
    config = sm.load_model_config(args.config)
    if args.dry_run:
        _level_rule(args.level_rule)
        sweep_config(args), optimizer_config(args), optimizer_config(args, sweep=True)
        return config
    model = sm.assemble_tiered_model(config)
    frf = sm.compute_frf(model, config.frequency, config.extraction_mode)
    crit, info = build_criterion(args.mode, args, model, frf, _noise(config))
    design, value = run_optimize(run, args, model, frf, args.mode, crit)
    run.notes.update(info)
    run.notes.update(criterion=value, support=int(np.count_nonzero(design.weights > 0)))
    _say(args, f"{args.mode}: criterion={value:.10g} support={run.notes['support']} binary={design.is_binary()}")
    return config


def scenario_set(args, model, frf, designs):
    kind = args.scenarios
    if kind == "one-out":
        return scenarios.one_out_scenarios(frf.n_y)
    if kind in ("one-out-support", "two-out-support"):
        k = 1 if kind == "one-out-support" else 2
        sup = np.flatnonzero(np.any([d.weights > 0 for d in designs], axis=0))
        return scenarios.k_out_scenarios(frf.n_y, k, among=sup)
    if kind == "bernoulli":
        pof = scenarios.tiered_pof(model, _level_rule(args.level_rule))
        return scenarios.bernoulli_scenarios(pof, args.n_samps, args.seed)
    if kind == "clipping":
        return _clipping(args, model, frf)[1]
    if kind == "file":
        if not args.scenario_file:
            raise InvalidConfigError("--scenario-file is required with --scenarios file")
        stem = Path(args.scenario_file)
        return scenarios.read_scenarios(stem, stem.with_suffix(".json"))
    raise InvalidConfigError(f"unknown scenario kind {kind!r}")


def theta0_distribution(args, n_theta):
    if n_theta != len(THETA0_MEAN):
        mean = np.zeros(n_theta)
    else:
        mean = np.array(THETA0_MEAN)
    return postproc.NominalParameterDistribution(mean, THETA0_STD**2 * np.eye(n_theta), args.n_draws, args.seed)


def evaluate_designs(run, args, frf, named, scen, noise, metrics, tag, renorm=False):
    reports = {}
    for label, design in named.items():
        if "logdet" in metrics:
            rep = postproc.logdet_over_scenarios(frf, design, scen, noise, fractional_renorm=renorm,
                                                 illposed_policy=args.illposed_policy)
            rep.seeds = {"seed": args.seed}
            rep.write_csv(run.path(f"report_{tag}_{label}_logdet.csv"))
            rep.write_json(run.path(f"report_{tag}_{label}_logdet.json"))
            reports[f"{label}:logdet"] = rep
        if "mse" in metrics or "pmse" in metrics:
            dist = theta0_distribution(args, frf.n_theta)
            mse, pmse = postproc.mse_over_failures(frf, design, scen, dist, noise, args.n_test, args.seed,
                                                   args.illposed_policy, threads=args.threads)
            for rep in (mse, pmse):
                name = rep.metric.replace("empirical_", "")
                if name in metrics:
                    rep.write_csv(run.path(f"report_{tag}_{label}_{name}.csv"))
                    rep.write_json(run.path(f"report_{tag}_{label}_{name}.json"))
                    reports[f"{label}:{name}"] = rep
    postproc.write_summary_csv(reports, run.path(f"summary_{tag}.csv"))
    return reports


def cmd_evaluate(args, run):
    config = sm.load_model_config(args.config)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    bad = sorted(set(metrics) - {"logdet", "mse", "pmse"})
    if bad or not metrics:
        raise InvalidConfigError(f"unknown metric(s) {bad}; choose from logdet, mse, pmse")
    if not args.designs:
        raise InvalidConfigError("at least one --designs file is required")
    named = {Path(p).stem: load_design(p) for p in args.designs}
    if args.dry_run:
        return config
    model = sm.assemble_tiered_model(config)
    frf = sm.compute_frf(model, config.frequency, config.extraction_mode)
    for label, d in named.items():
        if d.n_y != frf.n_y:
            raise InvalidConfigError(f"design {label} has {d.n_y} weights, model has {frf.n_y} sensors")
    scen = scenario_set(args, model, frf, list(named.values()))
    if scen.n_scenarios == 0:
        raise InvalidConfigError("scenario set is empty")
    if args.random_baselines:
        budget = max(d.budget for d in named.values())
        n_tilde = args.n_tilde or max(1, int(round(budget)))
        frac = min(1.0, budget / n_tilde)
        for k, d in enumerate(postproc.random_designs(frf.n_y, n_tilde, args.random_baselines, args.seed,
                                                      "fractional", frac)):
            named[f"random{k:03d}"] = d
    reports = evaluate_designs(run, args, frf, named, scen, _noise(config), metrics, "evaluate",
                               renorm=args.renorm)
    for key, rep in reports.items():
        if not key.startswith("random"):
            _say(args, f"{key}: mean={rep.mean:.6g} median={rep.median:.6g} worst={rep.worst:.6g} "
                       f"no_failure={rep.no_failure_value:.6g} excluded={rep.excluded_count}")
    return config


def cmd_scenarios(args, run):
    config = sm.load_model_config(args.config)
    if args.dry_run:
        return config
    model = sm.assemble_tiered_model(config)
    frf = sm.compute_frf(model, config.frequency, config.extraction_mode)
    kind = args.kind
    if kind == "one-out":
        scen = scenarios.one_out_scenarios(frf.n_y)
    elif kind == "k-out":
        scen = scenarios.k_out_scenarios(frf.n_y, args.k)
    elif kind == "bernoulli":
        scen = scenarios.bernoulli_scenarios(scenarios.tiered_pof(model, _level_rule(args.level_rule)),
                                             args.n_samps, args.seed)
    else:
        clip, scen, occ = _clipping(args, model, frf)
        write_occurrence(run.path("clipping_occurrence.csv"), model, occ)
        run.notes["force_std"] = math.sqrt(clip.force_covariance[0, 0])
    scenarios.write_scenarios(scen, run.path(f"scenarios_{kind}.csv"), run.path(f"scenarios_{kind}.json"),
                              seed=args.seed, config=config.to_dict())
    _say(args, f"{kind}: {scen.n_scenarios} scenarios over {scen.n_y} sensors")
    return config


def write_occurrence(path, model, occurrence):
    labels, levels = model.sensor_labels(), model.sensor_levels()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sensor_id", "node", "axis", "level", "occurrence_percent"])
        for i, ((node, axis), lv) in enumerate(zip(labels, levels)):
            w.writerow([i, node, axis, int(lv), repr(float(occurrence[i]))])


# ---------------------------------------------------------------------------
# protocol


PARTS = ("fractional", "pof", "clipping")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])


def protocol_fractional(run, args, model, frf, noise):
    """One-out robust versus classical fractional designs with random baselines."""
    frac_args = argparse.Namespace(**{**vars(args), "fractional": True})
    crit_c = criteria.Criterion.classical(noise)
    one_out = scenarios.one_out_scenarios(frf.n_y)
    crit_r = criteria.Criterion.scenario_avg(one_out, noise)
    w_c, _ = run_optimize(run, frac_args, model, frf, "classical", crit_c, "fractional_classical")
    w_r, _ = run_optimize(run, frac_args, model, frf, "robust-oneout", crit_r, "fractional_robust_oneout")
    # baselines spend the same budget on a support of size ~b unless told otherwise
    n_tilde = args.n_tilde or max(1, int(round(args.budget)))
    randoms = postproc.random_designs(frf.n_y, n_tilde, args.random_baselines, args.seed, "fractional",
                                      min(1.0, args.budget / n_tilde))
    rows = []
    for label, d in [("classical", w_c), ("robust", w_r)] + [(f"random{k:03d}", d) for k, d in enumerate(randoms)]:
        c_val = criteria.evaluate(crit_c, frf, d)
        r_val = criteria.evaluate(crit_r, frf, d, illposed_policy=args.illposed_policy)
        rows.append((label, int(np.count_nonzero(d.weights > 0)), c_val, r_val))
    _write_rows(run.path("fractional_criteria.csv"), ["design", "support", "classical", "robust_oneout"], rows)
    named = {"classical": w_c, "robust": w_r}
    for k in (1, 2):
        for label, d in named.items():
            scen = scenarios.k_out_scenarios(frf.n_y, k, among=np.flatnonzero(d.weights > 0))
            rep = postproc.logdet_over_scenarios(frf, d, scen, noise, fractional_renorm=True,
                                                 illposed_policy=args.illposed_policy)
            rep.write_csv(run.path(f"report_fractional_{k}out_{label}_logdet.csv"))
            rep.write_json(run.path(f"report_fractional_{k}out_{label}_logdet.json"))
            named_rep = {f"{label}": rep}
            postproc.write_summary_csv(named_rep, run.path(f"summary_fractional_{k}out_{label}.csv"))
    run.notes["fractional"] = {
        "n_tilde": n_tilde,
        "classical": {"classical": rows[0][2], "robust_oneout": rows[0][3], "support": rows[0][1]},
        "robust": {"classical": rows[1][2], "robust_oneout": rows[1][3], "support": rows[1][1]},
    }
    _say(args, f"[fractional] classical: {rows[0][2:]}  robust: {rows[1][2:]}  n_tilde={n_tilde}")


def protocol_pof(run, args, model, frf, noise, cache):
    """Tiered failure probabilities: binary designs, Bernoulli post-evaluation, MSE/PMSE."""
    pof = scenarios.tiered_pof(model, _level_rule(args.level_rule))
    _write_rows(run.path("pof_map.csv"), ["sensor_id", "level", "q"],
                [(i, int(lv), float(q)) for i, (lv, q) in enumerate(zip(model.sensor_levels(), pof.q))])
    crit_p = criteria.Criterion.pof(pof.survival, noise)
    w_c = classical_binary(run, args, model, frf, noise, cache)
    w_p, _ = run_optimize(run, args, model, frf, "robust-pof", crit_p, "binary_robust_pof")
    scen = scenarios.bernoulli_scenarios(pof, args.n_samps, args.seed)
    named = {"classical": w_c, "robust": w_p}
    reports = evaluate_designs(run, args, frf, named, scen, noise, ["logdet", "mse", "pmse"], "pof")
    run.notes["pof"] = {k: rep.summary() for k, rep in reports.items()}
    run.notes["pof"]["criterion"] = {k: criteria.evaluate(crit_p, frf, d) for k, d in named.items()}
    run.notes["pof"]["identical_designs"] = bool(np.array_equal(w_c.weights, w_p.weights))
    _say(args, "[pof] " + "  ".join(f"{k}: mean={r.mean:.5g}" for k, r in reports.items()))


def protocol_clipping(run, args, model, frf, noise, cache):
    """Clipping-induced dropout: tuned force level, robust versus classical binary designs."""
    clip, masks, occ = _clipping(args, model, frf)
    write_occurrence(run.path("clipping_occurrence.csv"), model, occ)
    scenarios.write_scenarios(masks, run.path("scenarios_clipping.csv"), run.path("scenarios_clipping.json"),
                              seed=args.seed)
    crit = criteria.Criterion.scenario_avg(masks, noise)
    w_c = classical_binary(run, args, model, frf, noise, cache)
    w_r, _ = run_optimize(run, args, model, frf, "robust-clipping", crit, "binary_robust_clipping")
    named = {"classical": w_c, "robust": w_r}
    reports = evaluate_designs(run, args, frf, named, masks, noise, ["logdet"], "clipping")
    rates = scenarios.tier_rates(occ, model.sensor_levels())
    run.notes["clipping"] = {
        "force_std": math.sqrt(clip.force_covariance[0, 0]),
        "tier_rates_percent": {str(k): v for k, v in rates.items()},
        "reports": {k: rep.summary() for k, rep in reports.items()},
        "top_tier_sensors": {k: int(np.count_nonzero(d.weights[model.sensor_levels() == max(rates)] > 0))
                             for k, d in named.items()},
    }
    _say(args, f"[clipping] std={run.notes['clipping']['force_std']:.4g} tiers(min,median,max %)={rates} "
               + "  ".join(f"{k}: mean={r.mean:.5g}" for k, r in reports.items()))


def classical_binary(run, args, model, frf, noise, cache):
    if "classical" not in cache:
        cache["classical"], _ = run_optimize(run, args, model, frf, "classical",
                                             criteria.Criterion.classical(noise), "binary_classical")
    return cache["classical"]


def cmd_protocol(args, run):
    config = sm.load_model_config(args.config)
    parts = PARTS if args.part == "all" else (args.part,)
    _level_rule(args.level_rule)
    if args.dry_run:
        return config
    model = sm.assemble_tiered_model(config)
    frf = sm.compute_frf(model, config.frequency, config.extraction_mode)
    sm.write_frf_csv(frf, run.path("frf.csv"))
    noise, cache, timings = _noise(config), {}, {}
    for part in parts:
        t0 = time.perf_counter()
        {"fractional": lambda: protocol_fractional(run, args, model, frf, noise),
         "pof": lambda: protocol_pof(run, args, model, frf, noise, cache),
         "clipping": lambda: protocol_clipping(run, args, model, frf, noise, cache)}[part]()
        timings[part] = time.perf_counter() - t0
    run.notes["timings_s"] = timings
    return config


# ---------------------------------------------------------------------------
# argument parsing


def _common(p):
    p.add_argument("--config", default="demo", help="model config JSON path or 'demo'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--illposed-policy", choices=postproc.POLICIES, default="exclude")
    p.add_argument("--dry-run", action="store_true", help="validate inputs and write the manifest only")
    p.add_argument("--quiet", action="store_true")


def _opt_flags(p):
    p.add_argument("--budget", type=float, default=12.0)
    p.add_argument("--fractional", action="store_true", help="gamma = 0 relaxed solve instead of a sweep")
    p.add_argument("--gamma-min", type=float, default=1e-1)
    p.add_argument("--gamma-max", type=float, default=1e5)
    p.add_argument("--gamma-count", type=int, default=100)
    p.add_argument("--binary-tol", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=2000, help="iteration cap of the gamma = 0 solve")
    p.add_argument("--sweep-max-iters", type=int, default=300, help="iteration cap per gamma in a sweep")
    p.add_argument("--grad-tol", type=float, default=1e-8)


def _scenario_flags(p):
    p.add_argument("--level-rule", default=json.dumps({str(k): v for k, v in scenarios.DEFAULT_TIER_RULE.items()}))
    p.add_argument("--n-samps", type=int, default=100_000)
    p.add_argument("--threshold", type=float, default=500.0, help="clipping threshold in g")
    p.add_argument("--n-realizations", type=int, default=100)
    p.add_argument("--force-std", type=float, default=None, help="skip tuning and use this force std")
    p.add_argument("--clip-target", type=float, default=0.9, help="top-tier median clip rate for tuning")


def _eval_flags(p):
    p.add_argument("--n-test", type=int, default=50, help="noise replicates per parameter draw")
    p.add_argument("--n-draws", type=int, default=100, help="nominal parameter draws")
    p.add_argument("--random-baselines", type=int, default=0)
    p.add_argument("--n-tilde", type=int, default=None, help="support size of random baselines (default: round(budget))")


def build_parser():
    parser = argparse.ArgumentParser(prog="oed", description="Failure-robust optimal sensor placement.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-model", help="assemble the model and export the FRF matrix")
    _common(p)

    p = sub.add_parser("optimize", help="compute a classical or robust design")
    _common(p)
    p.add_argument("--mode", choices=MODES, default="classical")
    _opt_flags(p)
    _scenario_flags(p)

    p = sub.add_parser("evaluate", help="evaluate designs over failure scenarios")
    _common(p)
    p.add_argument("--designs", nargs="+", default=[])
    p.add_argument("--scenarios", default="one-out",
                   choices=("one-out", "one-out-support", "two-out-support", "bernoulli", "clipping", "file"))
    p.add_argument("--scenario-file")
    p.add_argument("--metrics", default="logdet")
    p.add_argument("--renorm", action="store_true", help="renormalise surviving fractional weights")
    _scenario_flags(p)
    _eval_flags(p)

    p = sub.add_parser("scenarios", help="generate and export a scenario set")
    _common(p)
    p.add_argument("--kind", choices=("one-out", "k-out", "bernoulli", "clipping"), default="one-out")
    p.add_argument("--k", type=int, default=2)
    _scenario_flags(p)

    p = sub.add_parser("protocol", help="run the robust-versus-classical study end to end")
    _common(p)
    p.add_argument("--part", choices=("all",) + PARTS, default="all")
    _opt_flags(p)
    _scenario_flags(p)
    _eval_flags(p)
    p.set_defaults(random_baselines=100)
    return parser


COMMANDS = {
    "build-model": cmd_build_model,
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "scenarios": cmd_scenarios,
    "protocol": cmd_protocol,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise InvalidConfigError("--threads must be >= 1")
        run = Run(args)
        config = COMMANDS[args.command](args, run)
        chash = scenarios.config_hash(config.to_dict()) if config is not None else None
        run.write_manifest(chash)
    except OEDError as exc:
        print(f"oed: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"oed: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
