"""``mrn <command> --config <path> [--seed N --k N --eps a,b,c --out DIR]``.

Every run writes its data files plus ``manifest.json`` into the output
directory.  Exit status: 0 success, 1 configuration error, 2 when a
computation did not converge within its caps (results are still written).
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import NEG_INFINITY, invariant_distribution, lyapunov, residual_slope, taylor_q, taylor_residuals
from .config import COMMANDS, ExperimentConfig, validate_config
from .drn import (
    good_time_density,
    ks_critical_value,
    ks_distance,
    pullback_sync,
    seed_sync_times,
    stats_from_samples,
)
from .errors import CappedSyncTime, ConfigInvalid, DepthExceeded, MRNError, ResidualUnderflow, ThresholdOverlap
from .intermittency import (
    OmegaCounts,
    classify_curve,
    fit_thresholds,
    meet_curve,
    omega_membership,
    omega_set_counts,
    simulate_pair,
)
from .io import write_csv, write_json
from .linalg import DetMatrix
from .noise import Alphabet, enumerate_alphabet, rank_census, sample_realization
from .perturbation import PerturbationMap, pbn_model, random_perturbation, validate_perturbation

log = logging.getLogger("mrn")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2

# sub-seed tags
_PERT, _OMEGA, _MC, _CONTEXTS, _ENSEMBLE = range(5)


class _Run:
    """Collects output files and the exit status of one pipeline."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        self.status = EXIT_OK

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.out / name, header, rows)
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        write_json(self.out / name, obj)
        self.files.append(name)

    def not_converged(self) -> None:
        self.status = EXIT_NOT_CONVERGED


def sub_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1, np.uint64)[0] >> np.uint64(2))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MRN_THREADS", "1")))
    except ValueError:
        return 1


def _chunked(fn, seeds: range, workers: int) -> list:
    if workers == 1 or len(seeds) < 2 * workers:
        return [fn(seeds)]
    step = -(-len(seeds) // (4 * workers))
    chunks = [seeds[i : i + step] for i in range(0, len(seeds), step)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _ensemble(cfg: ExperimentConfig) -> range:
    base = sub_seed(cfg.seed, _ENSEMBLE)
    return range(base, base + cfg.n_seeds)


def _load_obj(src):
    if isinstance(src, dict):
        return src
    with open(src, encoding="utf-8") as fh:
        return json.load(fh)


def load_alphabet(cfg: ExperimentConfig) -> Alphabet:
    if cfg.alphabet is None:
        return enumerate_alphabet(cfg.k)
    alphabet = Alphabet.from_json(_load_obj(cfg.alphabet))
    if alphabet.k != cfg.k:
        raise ConfigInvalid([f"alphabet has k={alphabet.k} but config k={cfg.k}"])
    return alphabet


def load_perturbation(cfg: ExperimentConfig, alphabet: Alphabet) -> PerturbationMap:
    k = alphabet.k
    if cfg.perturbation is not None:
        f = PerturbationMap.from_json(_load_obj(cfg.perturbation))
        if f.k != k:
            raise ConfigInvalid([f"perturbation has k={f.k} but config k={k}"])
        bad = validate_perturbation(f, alphabet)
        if bad:
            raise ConfigInvalid([f"perturbation symbol {v.symbol} ({v.i}, {v.j}): {v.reason}" for v in bad])
    else:
        f = random_perturbation(sub_seed(cfg.seed, _PERT), alphabet, cfg.zero_fraction, cfg.magnitude or 1.0 / k)
    if cfg.zero_ranks:
        drop = set(cfg.zero_ranks)
        f = PerturbationMap(k, {c: fa for c, fa in f.table.items() if DetMatrix.from_code(k, c).rank not in drop})
    return f


def _digits_text(row) -> str:
    return " ".join(str(int(t) + 1) for t in row)


def cmd_enumerate(cfg: ExperimentConfig, run: _Run) -> None:
    alphabet = enumerate_alphabet(cfg.k)
    ranks = alphabet.ranks()
    run.csv(
        "alphabet.csv",
        ["index", "digits", "rank"],
        ((i, _digits_text(row), int(r)) for i, (row, r) in enumerate(zip(alphabet.digits, ranks))),
    )
    census = rank_census(cfg.k)
    run.csv(
        "census.csv",
        ["rank", "closed_form", "brute_force"],
        ((r, census.closed_form[r], census.brute_force[r]) for r in sorted(census.closed_form)),
    )
    run.json("census.json", {"k": cfg.k, "census": {str(r): c for r, c in census.closed_form.items()}})


def _sync_chunk(alphabet: Alphabet, cap: int, seeds: range):
    return seed_sync_times(alphabet, seeds, cap)


def cmd_sync_times(cfg: ExperimentConfig, run: _Run) -> None:
    alphabet = load_alphabet(cfg)
    seeds = _ensemble(cfg)
    parts = _chunked(partial(_sync_chunk, alphabet, cfg.cap), seeds, _workers())
    plus = np.concatenate([p[0] for p in parts])
    minus = np.concatenate([p[1] for p in parts])
    capped = sum(p[2] for p in parts)
    orbit = sample_realization(sub_seed(cfg.seed, _OMEGA), alphabet)
    stats = stats_from_samples(plus, minus, capped, cfg.m, good_time_density(orbit, cfg.m, cfg.orbit_length))
    run.csv("sync_times.csv", ["n", "count_plus", "count_minus", "cdf_plus", "cdf_minus"], stats.rows())
    nu1 = alphabet.rank_one_mass()
    run.json(
        "sync_times.json",
        {
            "n_seeds": stats.n_seeds,
            "n_capped": capped,
            "mean_plus": stats.mean_plus,
            "mean_bound": 1.0 / nu1 if nu1 > 0 else None,
            "m": cfg.m,
            "cdf_at_m": stats.cdf.get(cfg.m, 1.0),
            "density_good_times": stats.density_good_times,
            "ks_distance": ks_distance(plus, minus),
            "ks_critical_99": ks_critical_value(plus.size, minus.size, 0.01),
        },
    )
    if capped:
        run.not_converged()


def _vector(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.vector is not None:
        return np.asarray(cfg.vector, dtype=float)
    v = np.zeros(cfg.k)
    v[0], v[1] = 1.0, -1.0
    return v


def cmd_lyapunov(cfg: ExperimentConfig, run: _Run) -> None:
    alphabet = load_alphabet(cfg)
    f = load_perturbation(cfg, alphabet)
    omega = sample_realization(sub_seed(cfg.seed, _OMEGA), alphabet)
    v = _vector(cfg)
    summary = []
    for i, eps in enumerate(cfg.epsilon_grid):
        est = lyapunov(eps, omega, v, cfg.horizon, f)
        run.csv(f"lyapunov_trace_{i}.csv", ["n", "log_norm"], ((int(n), x) for n, x in est.log_trace))
        value = "-inf" if est.value is NEG_INFINITY else est.value
        summary.append({"epsilon": eps, "value": value, "n_used": est.n_used, "trace": f"lyapunov_trace_{i}.csv"})
    run.json("lyapunov.json", {"vector": v, "estimates": summary})


def cmd_invariant(cfg: ExperimentConfig, run: _Run) -> None:
    alphabet = load_alphabet(cfg)
    f = load_perturbation(cfg, alphabet)
    omega = sample_realization(sub_seed(cfg.seed, _OMEGA), alphabet)
    n_minus, j, capped = pullback_sync(omega, cfg.cap)
    rows, summary = [], []
    for eps in cfg.epsilon_grid:
        inv = invariant_distribution(eps, omega, f, tol=cfg.tol, depth_cap=cfg.depth_cap)
        rows.extend((eps, i + 1, float(x)) for i, x in enumerate(inv.p))
        summary.append(
            {
                "epsilon": eps,
                "depth": inv.depth,
                "residual": inv.residual,
                "converged": inv.converged,
                "start_deviation": inv.start_deviation,
            }
        )
        if not inv.converged:
            run.not_converged()
    run.csv("invariant.csv", ["epsilon", "component_index", "p_value"], rows)
    run.json(
        "invariant.json",
        {"j_index": None if capped else j + 1, "n_minus": None if capped else n_minus, "runs": summary},
    )


def cmd_taylor(cfg: ExperimentConfig, run: _Run) -> None:
    alphabet = load_alphabet(cfg)
    f = load_perturbation(cfg, alphabet)
    omega = sample_realization(sub_seed(cfg.seed, _OMEGA), alphabet)
    summary: dict = {"m": cfg.m}
    try:
        tc = taylor_q(omega, f, cfg.m, cfg.depth_cap)
        eps, res = taylor_residuals(omega, f, cfg.m, cfg.epsilon_grid, cfg.depth_cap)
    except DepthExceeded as e:
        summary["error"] = str(e)
        run.json("taylor.json", summary)
        run.not_converged()
        return
    summary.update(j_index=tc.j_index + 1, q=[q.tolist() for q in tc.q], depth_total=tc.depth_total)
    run.csv("taylor.csv", ["epsilon", "residual"], zip(eps[::-1].tolist(), res[::-1].tolist()))
    try:
        summary["slope"] = residual_slope(eps, res)
        summary["underflow"] = False
    except ResidualUnderflow as e:
        summary["slope"] = None if np.isnan(e.slope) else e.slope
        summary["underflow"] = True
        summary["usable"] = e.usable
    run.json("taylor.json", summary)


def _omega_chunk(alphabet: Alphabet, f: PerturbationMap, m: int, depth_cap: int, seeds: range) -> OmegaCounts:
    return omega_set_counts(alphabet, f, m, seeds, depth_cap)


def _omega_measures(cfg: ExperimentConfig, alphabet: Alphabet, f: PerturbationMap, m: int):
    parts = _chunked(partial(_omega_chunk, alphabet, f, m, cfg.depth_cap), _ensemble(cfg), _workers())
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total.measures()


def _measures_json(om) -> dict:
    return {
        "mu_omega_ell": om.mu_omega_ell,
        "mu_omega_bullet": om.mu_omega_bullet,
        "ell_star": om.ell_star,
        "a": om.a_value,
        "a_user_chosen": om.a_user_chosen,
        "n_samples": om.n_samples,
        "n_excluded": om.n_excluded,
        "n_disagree": om.n_disagree,
    }


def cmd_omega_sets(cfg: ExperimentConfig, run: _Run) -> None:
    alphabet = load_alphabet(cfg)
    f = load_perturbation(cfg, alphabet)
    om = _omega_measures(cfg, alphabet, f, cfg.m)
    run.json("omega_sets.json", _measures_json(om))
    if om.n_excluded:
        run.not_converged()


def cmd_intermittency(cfg: ExperimentConfig, run: _Run) -> None:
    alphabet = load_alphabet(cfg)
    f = load_perturbation(cfg, alphabet)
    omega = sample_realization(sub_seed(cfg.seed, _OMEGA), alphabet)
    om = _omega_measures(cfg, alphabet, f, cfg.m or 1)
    ell = om.ell_star or 1
    try:
        member = omega_membership(omega, f, ell, range(1, cfg.horizon + 1), cfg.depth_cap)
    except DepthExceeded as e:
        run.json("intermittency.json", {"error": str(e), **_measures_json(om)})
        run.not_converged()
        return
    runs = []
    for i, eps in enumerate(cfg.epsilon_grid):
        meet = meet_curve(eps, omega, cfg.horizon, f)
        b, c = fit_thresholds(meet, eps, ell, member)
        entry = {"epsilon": eps, "ell": ell, "b_fit": b, "c_fit": c}
        try:
            cls = classify_curve(meet, eps, ell, b, c)
        except ThresholdOverlap as e:
            entry["error"] = str(e)
            runs.append(entry)
            run.not_converged()
            continue
        labels = cls.labels(cfg.horizon)
        mc = None
        if cfg.n_samples:
            mc = simulate_pair(eps, omega, cfg.horizon, cfg.n_samples, sub_seed(cfg.seed, _MC), f).mc_meet_freq
        rows = (
            (n, float(meet[n]), "" if mc is None else float(mc[n]), labels[n] if n else "U")
            for n in range(cfg.horizon + 1)
        )
        run.csv(f"intermittency_{i}.csv", ["n", "meet_prob", "mc_freq", "class"], rows)
        entry.update(density_e=cls.density_e, density_f=cls.density_f, data=f"intermittency_{i}.csv")
        runs.append(entry)
    run.json(
        "intermittency.json",
        {"ell_star": om.ell_star, "a": om.a_value, "mu_omega_ell": om.mu_omega_ell, "runs": runs},
    )


def cmd_pbn(cfg: ExperimentConfig, run: _Run) -> None:
    model = pbn_model(cfg.g, sub_seed(cfg.seed, _CONTEXTS), cfg.contexts)
    checks = []
    for eps in [0.0, *cfg.epsilon_grid]:
        p = model.flip_probability(eps)
        col_err = max(float(np.abs(model.kernel(p, model.alphabet.symbol(i)).sum(axis=0) - 1).max())
                      for i in range(len(model.alphabet)))
        entry = {"epsilon": eps, "flip_probability": p, "max_column_sum_error": col_err}
        if model.g <= 6:
            e = Fraction(min(eps, 1.0))
            pe = e / model.reparam
            worst = Fraction(0)
            for i in range(len(model.alphabet)):
                a = model.alphabet.symbol(i)
                diff = model.kernel(pe, a, exact=True) - a.dense().astype(int).astype(object)
                worst = max(worst, max(sum(abs(x) for x in diff[:, j]) for j in range(model.k)))
            entry["deviation_within_eps"] = bool(worst <= e)
        checks.append(entry)
    rows = []
    if model.k <= 64:
        omega = sample_realization(sub_seed(cfg.seed, _OMEGA), model.alphabet)
        for eps in cfg.epsilon_grid:
            inv = invariant_distribution(eps, omega, model, tol=cfg.tol, depth_cap=cfg.depth_cap)
            rows.extend((eps, i + 1, float(x)) for i, x in enumerate(inv.p))
            if not inv.converged:
                run.not_converged()
        run.csv("pbn_invariant.csv", ["epsilon", "component_index", "p_value"], rows)
    run.json(
        "pbn.json",
        {"g": model.g, "k": model.k, "reparam": model.reparam, "contexts": model.alphabet.to_json(), "checks": checks},
    )


PIPELINES = {
    "enumerate": cmd_enumerate,
    "sync-times": cmd_sync_times,
    "lyapunov": cmd_lyapunov,
    "invariant": cmd_invariant,
    "taylor": cmd_taylor,
    "intermittency": cmd_intermittency,
    "omega-sets": cmd_omega_sets,
    "pbn": cmd_pbn,
}


def run(cfg: ExperimentConfig, out: Path | None = None) -> int:
    """Execute one configured pipeline; returns the exit status."""
    out = Path(out or cfg.output_path or ".")
    started = dt.datetime.now(dt.timezone.utc)
    t0 = time.perf_counter()
    r = _Run(out)
    PIPELINES[cfg.command](cfg, r)
    write_json(
        out / "manifest.json",
        {
            "config": cfg.to_json(),
            "version": __version__,
            "started_at": started.isoformat(),
            "wall_time_s": time.perf_counter() - t0,
            "exit_status": r.status,
            "outputs": r.files,
        },
    )
    return r.status


def _parse_eps(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigInvalid([f"--eps: cannot parse {text!r} as comma-separated numbers"]) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrn", description="Markov random network experiments")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--eps", help="comma-separated epsilon grid")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = args.config.read_text(encoding="utf-8") if args.config else "{}"
        overrides = {"seed": args.seed, "k": args.k, "output_path": str(args.out) if args.out else None}
        if args.eps is not None:
            overrides["epsilon_grid"] = _parse_eps(args.eps)
        try:
            declared = json.loads(raw).get("command")
        except (json.JSONDecodeError, AttributeError):
            declared = None
        if declared is not None and declared != args.command:
            raise ConfigInvalid([f"config declares command {declared!r} but {args.command!r} was requested"])
        overrides["command"] = args.command
        cfg, violations = validate_config(raw, overrides)
        if violations:
            raise ConfigInvalid(violations)
        return run(cfg)
    except ConfigInvalid as e:
        for v in e.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DepthExceeded, CappedSyncTime) as e:
        print(f"not converged: {e}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except MRNError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
