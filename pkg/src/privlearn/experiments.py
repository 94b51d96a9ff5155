"""Experiment runners shared by the command line and the acceptance suite.

Each runner takes a parameter dict and a root seed and returns an
:class:`ExperimentResult` with per-trial records and a summary. Trial ``k``
draws from its own stream ``SeedSequence(seed).spawn(trials)[k]``, so records
do not depend on how trials are scheduled.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import masked_parity as mp
from .dp import (bound_chernoff_mult, bound_hoeffding, bound_laplace_sum, laplace_sample,
                 max_ratio)
from .expmech import agnostic_learn, output_distribution_from_scores, required_sample_size
from .gf2 import BitVector, LinearSystem, gaussian_eliminate, subspace_size
from .learning import (Database, FiniteDistribution, UniformCube, generate_database,
                       opt_error, parity, parity_class, true_error)
from .local import (LROracle, randomized_response, simulate_sq_learner, simulate_sq_query,
                    sq_sample_size)
from .parity import (AmplifiedConfig, ParityConfig, exact_output_distribution_A,
                     learn_amplified)
from .sq import AdversarialSQOracle, Discrete, ExactSQOracle, drive, rejection_simulate_batch


class ConfigError(ValueError):
    """Invalid experiment parameters; the message names the violated precondition."""


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int
    name: str | None = None
    out: str | None = None

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        if self.name is None:
            self.name = self.experiment


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool | None:
        return self.summary.get("pass")

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = out / self.config.name
        summary_path = stem.with_name(stem.name + ".summary.json")
        trials_path = stem.with_name(stem.name + ".trials.csv")
        payload = {"experiment": self.config.experiment, "seed": self.config.seed,
                   "params": self.config.params, "summary": self.summary,
                   "wall_clock_seconds": self.wall_clock}
        summary_path.write_text(json.dumps(payload, indent=2, default=_jsonable) + "\n")
        with open(trials_path, "w", newline="") as fh:
            if self.records:
                cols = list(self.records[0])
                for rec in self.records[1:]:
                    cols += [c for c in rec if c not in cols]
                writer = csv.DictWriter(fh, fieldnames=cols)
                writer.writeheader()
                writer.writerows(self.records)
        return summary_path, trials_path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def trial_rngs(seed: int, trials: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def run_trials(fn: Callable, params: dict, seed: int, trials: int, workers: int = 1) -> list:
    """Apply ``fn(params, rng, k)`` to every trial, in trial order."""
    seqs = np.random.SeedSequence(seed).spawn(trials)
    args = [(fn, params, s, k) for k, s in enumerate(seqs)]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_call, args, chunksize=max(1, trials // (4 * workers))))
    return [_call(a) for a in args]


def _call(arg):
    fn, params, seq, k = arg
    return fn(params, np.random.default_rng(seq), k)


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else float("inf")


def _floats(v) -> list[float]:
    if isinstance(v, str):
        return [float(eval_fraction(s)) for s in v.split(",") if s.strip()]
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(v)]


def _ints(v) -> list[int]:
    return [int(round(x)) for x in _floats(v)]


def eval_fraction(s: str) -> float:
    s = s.strip()
    if "/" in s:
        num, den = s.split("/")
        return float(num) / float(den)
    return float(s)


# -- private PARITY learning --------------------------------------------------

def _parity_cfg(p) -> AmplifiedConfig:
    try:
        return AmplifiedConfig(int(p.get("d", 8)), float(p.get("epsilon", 0.5)), float(p.get("alpha", 0.2)),
                               float(p.get("beta", 0.1)), float(p.get("c", 20.0)), float(p.get("c_prime", 48.0)))
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _parity_trial(p, rng, k):
    cfg = _parity_cfg(p)
    n = int(p.get("n") or cfg.required_n())
    r = BitVector.random(cfg.d, rng)
    target = parity(r)
    cube = UniformCube(cfg.d)
    z = generate_database(cube, target, n, rng)
    out = learn_amplified(z, cfg, rng)
    if out.failed:
        err = 1.0
    elif cfg.d <= 16:
        err = true_error(out.result, cube, target)
    else:
        err = 0.0 if out.result.key == target.key else 0.5
    return {"trial": k, "r": str(r), "n": n, "err": err, "bottom": int(out.failed),
            "success": int(err <= cfg.alpha), "bottoms": out.diagnostics["bottoms"]}


def learn_parity(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    cfg = _parity_cfg(p)
    trials = int(p.get("trials", 100))
    _need(trials >= 1, "trials must be >= 1")
    n = int(p.get("n") or cfg.required_n())
    _need(n > cfg.k * cfg.n_prime + cfg.s, f"n must exceed k*n' + s = {cfg.k * cfg.n_prime + cfg.s}")
    q = dict(p, n=n)
    recs = run_trials(_parity_trial, q, seed, trials, workers)
    rate = float(np.mean([r["success"] for r in recs]))
    target = 1 - cfg.beta - 0.03
    summary = {"n": n, "k": cfg.k, "n_prime": cfg.n_prime, "s": cfg.s, "trials": trials,
               "success_rate": rate, "threshold": target, "pass": rate >= target,
               "mean_err": float(np.mean([r["err"] for r in recs]))}
    return ExperimentResult(ExperimentConfig("learn-parity", q, seed), recs, summary)


def sweep(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    """Success rate of the amplified learner as both size constants are scaled.

    Scaling ``c`` and ``c'`` by the same factor scales the sample size roughly
    proportionally while keeping the learner well defined.
    """
    base = _parity_cfg(p)
    scales = sorted(_floats(p.get("scales", "1/64,1/32,1/16,1/8,1/4,1/2,1,2")))
    trials = int(p.get("trials", 100))
    predicted = base.required_n()
    recs, rows = [], []
    for j, lam in enumerate(scales):
        q = dict(p, c=base.c * lam, c_prime=base.c_prime * lam, n=None)
        cfg = _parity_cfg(q)
        q["n"] = cfg.required_n()
        res = run_trials(_parity_trial, q, seed + 7919 * (j + 1), trials, workers)
        rate = float(np.mean([r["success"] for r in res]))
        rows.append({"scale": lam, "n": q["n"], "success_rate": rate})
        recs += [dict(r, scale=lam) for r in res]
    goal = 1 - base.beta
    crossing = next((row["n"] for row in rows if row["success_rate"] >= goal), None)
    ratio = crossing / predicted if crossing else None
    summary = {"predicted_n": predicted, "goal": goal, "crossing_n": crossing,
               "crossing_over_predicted": ratio, "curve": rows,
               "pass": ratio is not None and 0.5 <= ratio <= 2.0}
    return ExperimentResult(ExperimentConfig("sweep", dict(p, scales=scales), seed), recs, summary)


# -- exponential mechanism ------------------------------------------------------

def _quarter_mask(x: np.ndarray) -> np.ndarray:
    return ((x & 1) & ((x >> 1) & 1)).astype(np.int8)


EPS0_DEFAULT_N = 100


def _expmech_setup(p):
    m = int(p.get("hypotheses", 16))
    _need(m >= 2 and m & (m - 1) == 0, "hypotheses must be a power of two (a parity class)")
    d = m.bit_length() - 1
    eps = float(p.get("epsilon", 0.5))
    alpha, beta = float(p.get("alpha", 0.2)), float(p.get("beta", 0.1))
    _need(eps >= 0, "epsilon must be >= 0")
    mode = p.get("mode", "realizable")
    _need(mode in ("realizable", "agnostic"), "mode must be realizable or agnostic")
    _need(mode == "realizable" or d >= 2, "agnostic mode needs at least 4 hypotheses")
    if p.get("n"):
        n = int(p["n"])
    elif eps == 0:
        n = EPS0_DEFAULT_N  # the output ignores the data
    else:
        n = required_sample_size(m, eps, alpha, beta)
    return d, eps, alpha, beta, mode, n


def _expmech_trial(p, rng, k):
    d, eps, alpha, beta, mode, n = _expmech_setup(p)
    H = parity_class(d)
    j = int(rng.integers(len(H)))
    target = H[j]
    pts = np.arange(1 << d, dtype=np.uint64)
    if mode == "realizable":
        dist = FiniteDistribution.uniform_over(pts, d, target(pts))
    else:
        # labels disagree with the target on a quarter of the cube, so OPT = 1/4
        dist = FiniteDistribution.uniform_over(pts, d, target(pts) ^ _quarter_mask(pts))
    z = dist.sample_labeled(n, rng)
    h = agnostic_learn(z, H, eps, rng)
    err = true_error(h, dist)
    opt = opt_error(H, dist)
    chosen = next(i for i, c in enumerate(H) if c.key == h.key)
    return {"trial": k, "target": j, "chosen": chosen, "n": n, "err": err, "opt": opt,
            "success": int(err <= opt + alpha)}


def exp_mech(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    d, eps, alpha, beta, mode, n = _expmech_setup(p)
    trials = int(p.get("trials", 100))
    q = dict(p, n=n, mode=mode, epsilon=eps)
    recs = run_trials(_expmech_trial, q, seed, trials, workers)
    rate = float(np.mean([r["success"] for r in recs]))
    m = 1 << d
    freq = np.bincount([r["chosen"] for r in recs], minlength=m) / trials
    summary = {"n": n, "mode": mode, "trials": trials, "success_rate": rate,
               "threshold": 1 - beta - 0.03, "opt": recs[0]["opt"],
               "output_frequencies": freq.tolist(),
               "max_frequency_deviation_from_uniform": float(np.max(np.abs(freq - 1 / m)))}
    if eps > 0:
        summary["pass"] = rate >= 1 - beta - 0.03
    else:
        # every frequency within 4 standard errors of 1/m
        summary["pass"] = summary["max_frequency_deviation_from_uniform"] <= 4 * _sigma(1 / m, trials)
    return ExperimentResult(ExperimentConfig("exp-mech", q, seed), recs, summary)


# -- exact privacy verification -------------------------------------------------

def _random_database(kind: str, d: int, n: int, rng) -> Database:
    if kind == "consistent":
        x = rng.integers(0, 1 << d, size=n, dtype=np.uint64)
        return Database(x, parity(BitVector.random(d, rng))(x), d)
    if kind == "inconsistent":
        x = rng.integers(0, 1 << d, size=n, dtype=np.uint64)
        return Database(x, rng.integers(0, 2, size=n).astype(np.int8), d)
    # a few repeated points with clashing labels: most subsamples have no solution
    pool = rng.integers(0, 1 << d, size=max(1, n // 3), dtype=np.uint64)
    x = pool[rng.integers(0, len(pool), size=n)]
    y = (np.arange(n) % 2).astype(np.int8)
    return Database(x, y, d)


def neighbor(z: Database, rng) -> Database:
    i = int(rng.integers(z.n))
    while True:
        x = int(rng.integers(0, 1 << z.d))
        y = int(rng.integers(0, 2))
        if x != int(z.x[i]) or y != int(z.y[i]):
            break
    xs, ys = z.x.copy(), z.y.copy()
    xs[i], ys[i] = x, y
    return Database(xs, ys, z.d)


KINDS = ("consistent", "inconsistent", "bottom-heavy")


def parity_privacy_family(d_max: int, n_max: int, pairs: int, rng) -> list[tuple[str, Database, Database]]:
    """Neighbouring pairs over sizes up to (d_max, n_max); the first pairs use
    the largest sizes and kinds rotate."""
    fam = []
    for k in range(pairs):
        kind = KINDS[k % 3]
        if k < 3:
            d, n = d_max, n_max
        else:
            d, n = int(rng.integers(1, d_max + 1)), int(rng.integers(1, n_max + 1))
        z = _random_database(kind, d, n, rng)
        fam.append((kind, z, neighbor(z, rng)))
    return fam


def expmech_pairs_max_ratio(d: int, n: int, eps: float) -> tuple[float, int]:
    """Largest output-probability ratio of the exponential mechanism over all
    neighbouring databases of size ``n`` for the parity class on {0,1}^d."""
    labeled = [(x, y) for x in range(1 << d) for y in (0, 1)]
    H = np.arange(1 << d)
    # correct[h, e]: hypothesis h labels example e correctly
    correct = np.array([[int(bin(h & x).count("1") % 2 == y) for (x, y) in labeled] for h in H])
    worst, pairs = 1.0, 0
    cache = {}
    for combo in itertools.product(range(len(labeled)), repeat=n):
        if combo not in cache:
            scores = correct[:, list(combo)].sum(axis=1) - n
            cache[combo] = output_distribution_from_scores(scores, eps)
        p = cache[combo]
        for i in range(n):
            for e in range(len(labeled)):
                if e == combo[i]:
                    continue
                nb = combo[:i] + (e,) + combo[i + 1:]
                if nb not in cache:
                    scores = correct[:, list(nb)].sum(axis=1) - n
                    cache[nb] = output_distribution_from_scores(scores, eps)
                ratio = float(np.max(np.maximum(p / cache[nb], cache[nb] / p)))
                worst = max(worst, ratio)
                pairs += 1
    return worst, pairs


def verify_dp(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    target = p.get("target", "parity-A")
    d, n = int(p.get("d", 2)), int(p.get("n", 3))
    epsilons = _floats(p.get("epsilon", "0.1,0.25,0.5"))
    _need(d >= 1 and n >= 1, "d and n must be >= 1")
    recs = []
    if target == "parity-A":
        _need(d <= 10 and n <= 12, "exact enumeration needs d <= 10 and n <= 12")
        for eps in epsilons:
            try:
                cfg = ParityConfig(eps)
            except ValueError as e:
                raise ConfigError(str(e)) from None
            fam = parity_privacy_family(d, n, int(p.get("pairs", 42)), np.random.default_rng(seed))
            for k, (kind, z, z2) in enumerate(fam):
                ratio, worst = max_ratio(exact_output_distribution_A(z, cfg), exact_output_distribution_A(z2, cfg))
                recs.append({"pair": k, "kind": kind, "epsilon": eps, "d": z.d, "n": z.n,
                             "ratio": ratio, "bound": math.exp(eps), "worst_outcome": repr(worst),
                             "ok": int(ratio <= math.exp(eps))})
    elif target == "exp-mech":
        _need(d <= 3 and n <= 4, "exhaustive neighbour enumeration needs d <= 3 and n <= 4")
        for eps in epsilons:
            _need(eps > 0, "epsilon must be positive")
            ratio, pairs = expmech_pairs_max_ratio(d, n, eps)
            recs.append({"pair": "all", "kind": "exhaustive", "epsilon": eps, "d": d, "n": n,
                         "pairs": pairs, "ratio": ratio, "bound": math.exp(eps),
                         "ok": int(ratio <= math.exp(eps))})
    else:
        raise ConfigError(f"unknown target {target!r}; choose parity-A or exp-mech")
    summary = {"target": target, "pairs_checked": len(recs), "max_ratio": max(r["ratio"] for r in recs),
               "max_log_ratio_over_epsilon": max(math.log(r["ratio"]) / r["epsilon"] for r in recs),
               "pass": all(r["ok"] for r in recs)}
    return ExperimentResult(ExperimentConfig("verify-dp", dict(p, target=target, epsilon=epsilons), seed),
                            recs, summary)


# -- local simulation of SQ -------------------------------------------------------

_MEAN_SUPPORT = np.arange(8)
_MEAN_WEIGHTS = np.array([0.05, 0.1, 0.2, 0.05, 0.15, 0.25, 0.12, 0.08])


def _sq_params(p):
    tau, beta, eps = float(p.get("tau", 0.1)), float(p.get("beta", 0.05)), float(p.get("epsilon", 0.5))
    b, c = float(p.get("b", 1.0)), float(p.get("c", 32.0))
    _need(0 < tau < 1, "tau must be in (0, 1)")
    _need(0 < beta < 1, "beta must be in (0, 1)")
    _need(eps > 0 and b > 0 and c > 0, "epsilon, b and c must be positive")
    return tau, beta, eps, b, c


def _mean_query(b):
    vals = b * np.linspace(-1, 1, len(_MEAN_SUPPORT))
    return lambda u: vals[np.asarray(u, dtype=np.int64)]


def _sq_mean_trial(p, rng, k):
    tau, beta, eps, b, c = _sq_params(p)
    g = _mean_query(b)
    truth = float(_MEAN_WEIGHTS @ g(_MEAN_SUPPORT))
    m = sq_sample_size(tau, beta, eps, b, c)
    entries = rng.choice(_MEAN_SUPPORT, size=m, p=_MEAN_WEIGHTS)
    v = simulate_sq_query(LROracle(entries, eps, record=False), np.arange(m), g, b, eps, rng)
    return {"trial": k, "m": m, "v": v, "truth": truth, "deviation": abs(v - truth),
            "fail": int(abs(v - truth) > tau)}


def _sq_maskedparity_trial(p, rng, k):
    _, beta, eps, _, c = _sq_params(p)
    d = int(p.get("d", 2))
    learner = mp.AdaptiveMaskedParityLearner(d)
    dom = learner.dom
    concept = mp.MaskedParityConcept(d, int(rng.integers(1 << d)), int(rng.integers(2)))
    taus = [learner.tau1] * d + [learner.tau2]
    n = sum(sq_sample_size(t, beta / learner.t, eps, 1.0, c) for t in taus)
    db = mp.sample_database(concept, dom, n, rng)
    sim = simulate_sq_learner(learner, db, eps, beta, rng, c=c)
    return {"trial": k, "r": concept.r, "a": concept.a, "n": n, "mode": sim.mode,
            "rounds": sim.rounds, "recovered": int(sim.output == concept),
            "fail": int(sim.output != concept)}


def simulate_sq_by_local(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    tau, beta, eps, b, c = _sq_params(p)
    trials = int(p.get("trials", 2000))
    query = p.get("query", "mean")
    if query == "mean":
        fn = _sq_mean_trial
    elif query == "masked-parity":
        d = int(p.get("d", 2))
        _need(d >= 2 and d & (d - 1) == 0, "d must be a power of two")
        fn = _sq_maskedparity_trial
    else:
        raise ConfigError(f"unknown query {query!r}; choose mean or masked-parity")
    recs = run_trials(fn, p, seed, trials, workers)
    rate = float(np.mean([r["fail"] for r in recs]))
    summary = {"query": query, "trials": trials, "failure_rate": rate, "beta": beta, "pass": rate <= beta}
    if query == "mean":
        summary["entries_per_query"] = recs[0]["m"]
        summary["laplace_sum_bound"] = bound_laplace_sum(recs[0]["m"], tau / 2, 2 * b / eps)
    return ExperimentResult(ExperimentConfig("simulate-sq-by-local", dict(p, query=query), seed), recs, summary)


# -- SQ simulation of local randomizers ---------------------------------------------

GRIDS = {"bit": ([0, 1], [0.7, 0.3]), "4-symbol": ([0, 1, 2, 3], [0.1, 0.2, 0.3, 0.4])}


def rejection_fidelity_cell(domain: str, eps: float, pattern, t: int, beta: float, runs: int,
                            rng) -> dict:
    """One grid cell: TV distance and iteration statistics of the batched simulation.
    ``pattern`` is None for the exact oracle or a tuple of signs, one per output."""
    support, weights = GRIDS[domain]
    R = randomized_response(eps, support)
    dist = Discrete(np.array(support), weights)
    true_p = np.asarray(weights) @ R.matrix
    if pattern is None:
        oracle = ExactSQOracle()
    else:
        signs = dict(zip(R.outputs, pattern))
        oracle = AdversarialSQOracle(lambda q: signs[q.key[2]])
    out, iters = rejection_simulate_batch(R, dist, t, beta, oracle, rng, runs)
    emp = np.bincount(out, minlength=len(R.outputs)) / runs
    tv = 0.5 * float(np.abs(emp - true_p).sum())
    mean_it, sd_it = float(iters.mean()), float(iters.std(ddof=1))
    it_bound = 2 * math.exp(eps) + 3 * sd_it / math.sqrt(runs)
    tv_bound = beta / t + 0.005
    return {"domain": domain, "epsilon": eps, "oracle": "exact" if pattern is None else "adversarial",
            "pattern": "" if pattern is None else "".join("+" if s > 0 else "-" for s in pattern),
            "runs": runs, "tv": tv, "tv_bound": tv_bound, "mean_iterations": mean_it,
            "iteration_bound": it_bound, "sq_queries": oracle.queries,
            "ok": int(tv <= tv_bound and mean_it <= it_bound)}


def simulate_local_by_sq(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    beta, t = float(p.get("beta", 0.03)), int(p.get("t", 1))
    _need(0 < beta < 1 and t >= 1, "need 0 < beta < 1 and t >= 1")
    _need(beta / (3 * t) <= 1 / 3, "phi = beta/(3t) must be <= 1/3")
    runs = int(p.get("trials", 100_000))
    epsilons = _floats(p.get("epsilon", "0.25,0.5"))
    domains = [s.strip() for s in str(p.get("domains", "bit,4-symbol")).split(",")]
    for dname in domains:
        _need(dname in GRIDS, f"unknown domain {dname!r}; choose from {sorted(GRIDS)}")
    cells = []
    for dname in domains:
        k = len(GRIDS[dname][0])
        patterns = [None] + ([pat for pat in itertools.product((1, -1), repeat=k)] if k <= 4 else [])
        for eps in epsilons:
            _need(eps > 0, "epsilon must be positive")
            cells += [(dname, eps, pat) for pat in patterns]
    rngs = trial_rngs(seed, len(cells))
    recs = [dict(cell=j, **rejection_fidelity_cell(dn, e, pat, t, beta, runs, rngs[j]))
            for j, (dn, e, pat) in enumerate(cells)]
    summary = {"cells": len(recs), "max_tv": max(r["tv"] for r in recs), "tv_bound": beta / t + 0.005,
               "max_mean_iterations_over_bound": max(r["mean_iterations"] / r["iteration_bound"] for r in recs),
               "pass": all(r["ok"] for r in recs)}
    return ExperimentResult(ExperimentConfig("simulate-local-by-sq", dict(p, epsilon=epsilons, domains=domains), seed),
                            recs, summary)


# -- MASKED-PARITY ------------------------------------------------------------------

def _sign_for(d: int, pattern: int):
    def sign(q):
        j = q.key[1] if q.key[0] == "g" else d
        return 1.0 if (pattern >> j) & 1 else -1.0
    return sign


def masked_parity_recovery(d: int, adversarial: bool) -> tuple[int, int]:
    """(recovered, runs) for the adaptive learner over every concept, and with
    ``adversarial`` over every +-tau sign pattern of its d+1 queries too."""
    dom = mp.MaskedParityDomain(d)
    learner = mp.AdaptiveMaskedParityLearner(d)
    ok = runs = 0
    patterns = range(1 << (d + 1)) if adversarial else [None]
    for c in mp.all_concepts(d):
        dist = mp.labeled_distribution(c, dom)
        for pat in patterns:
            oracle = ExactSQOracle() if pat is None else AdversarialSQOracle(_sign_for(d, pat))

            def answer_round(batch, r, oracle=oracle, dist=dist):
                oracle.round = r
                return [oracle.answer(dist, q) for q in batch]
            out = drive(learner, answer_round).output
            ok += int(out == c)
            runs += 1
    return ok, runs


def masked_parity_adaptive(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    ds = _ints(p.get("d", "2,4,8"))
    adv_max = int(p.get("adversarial_max_d", 4))
    for d in ds:
        _need(2 <= d <= mp.MAX_D and d & (d - 1) == 0, f"d must be a power of two in [2, {mp.MAX_D}], got {d}")
    recs = []
    for d in ds:
        for adversarial in ([False, True] if d <= adv_max else [False]):
            ok, runs = masked_parity_recovery(d, adversarial)
            recs.append({"d": d, "oracle": "adversarial" if adversarial else "exact",
                         "runs": runs, "recovered": ok, "ok": int(ok == runs)})
    summary = {"pass": all(r["ok"] for r in recs), "runs": sum(r["runs"] for r in recs)}
    return ExperimentResult(ExperimentConfig("masked-parity-adaptive", dict(p, d=ds), seed), recs, summary)


def make_strategy(name: str, d: int, t: int, tau: float, rng) -> mp.NonadaptiveStrategy:
    if name == "random-battery":
        return mp.RandomBattery(d, t, tau, rng)
    if name == "round-one-guess":
        return mp.RoundOneGuess(d, tau)
    if name == "majority-vote":
        return mp.MajorityVote(d, t, tau, rng)
    raise ConfigError(f"unknown strategy {name!r}")


def separation(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    d, t, trials = int(p.get("d", 8)), int(p.get("t", 16)), int(p.get("trials", 2000))
    _need(2 <= d <= mp.MAX_D and d & (d - 1) == 0, f"d must be a power of two in [2, {mp.MAX_D}]")
    _need(t >= 0 and trials >= 1, "need t >= 0 and trials >= 1")
    floor = 2 ** (-d / 3)
    tau = float(p.get("tau", floor))
    _need(tau >= floor, f"tau must be at least 2^(-d/3) = {floor:.6g}")
    names = [s.strip() for s in str(p.get("strategies", "random-battery,round-one-guess,majority-vote")).split(",")]
    adaptive = bool(int(p.get("adaptive", 1)))
    rngs = trial_rngs(seed, 2 * len(names))
    recs, per = [], {}
    for j, name in enumerate(names):
        strat = make_strategy(name, d, t, tau, rngs[2 * j])
        res = mp.separation_experiment(strat, trials, rngs[2 * j + 1], adaptive=adaptive and j == 0)
        good_sd = _sigma(res.good_bound, trials)
        fail_sd = _sigma(min(max(res.failure_bound, 0), 1), trials)
        info = {"t": strat.t, "good_rate": res.good_rate, "good_bound": res.good_bound,
                "failure_rate": res.failure_rate, "failure_bound": res.failure_bound,
                "failure_rate_given_good": res.failure_rate_given_good,
                "good_ok": res.good_rate >= res.good_bound - 3 * good_sd,
                "failure_ok": res.failure_rate >= res.failure_bound - 3 * fail_sd}
        if res.trials and res.trials[0].adaptive_err is not None:
            info["adaptive_max_err"] = max(tr.adaptive_err for tr in res.trials)
        per[name] = info
        for row, tr in zip(res.rows(), res.trials):
            rec = {"strategy": name, **row}
            if tr.adaptive_err is not None:
                rec["adaptive_err"] = tr.adaptive_err
            recs.append(rec)
    adaptive_ok = all(v.get("adaptive_max_err", 0.0) == 0.0 for v in per.values())
    summary = {"strategies": per, "adaptive_err_zero": adaptive_ok,
               "pass": adaptive_ok and all(v["good_ok"] and v["failure_ok"] for v in per.values())}
    return ExperimentResult(ExperimentConfig("separation", dict(p, tau=tau, strategies=names), seed), recs, summary)


# -- structural identities -------------------------------------------------------------

def _halving(rng, d: int, rows: int) -> tuple[bool, int]:
    """Adding one equation to a consistent system keeps, halves, or empties the
    solution set. Sizes are checked against brute force."""
    coeffs = [int(rng.integers(0, 1 << d)) for _ in range(rows)]
    r = int(rng.integers(0, 1 << d))
    rhs = [bin(c & r).count("1") % 2 for c in coeffs]
    sys = LinearSystem(d)
    for c, y in zip(coeffs, rhs):
        sys.add_row(BitVector(c, d), y)
    before = subspace_size(gaussian_eliminate(sys))
    c_new, y_new = int(rng.integers(0, 1 << d)), int(rng.integers(0, 2))
    sys.add_row(BitVector(c_new, d), y_new)
    after = subspace_size(gaussian_eliminate(sys))
    brute = sum(all(bin(c & v).count("1") % 2 == y for c, y in zip(coeffs + [c_new], rhs + [y_new]))
                for v in range(1 << d))
    return after in (before, before // 2, 0) and after == brute, after


def identities(p: dict, seed: int, workers: int = 1) -> ExperimentResult:
    rng = np.random.default_rng(seed)
    cases = int(p.get("cases", 50))
    recs = []

    def add(name, case, value, bound, ok):
        recs.append({"identity": name, "case": case, "value": float(value), "bound": float(bound), "ok": int(ok)})

    for k in range(cases):
        d = int(rng.integers(1, 9))
        ok, after = _halving(rng, d, int(rng.integers(0, d + 2)))
        add("gf2-halving", k, after, 0, ok)

    for d in (2, 4):
        dom = mp.MaskedParityDomain(d)
        concepts = mp.all_concepts(d)
        for k in range(cases):
            table = rng.uniform(-1, 1, size=(dom.size, 2))
            pieces = mp.fourier_decompose(table, dom)
            worst = 0.0
            for c in concepts:
                lhs = mp.true_expectation(table, c, dom)
                rhs = pieces.C_g + mp.inner_product_uniform(pieces.f, c(dom, dom.points()))
                worst = max(worst, abs(lhs - rhs))
            add(f"decomposition-d{d}", k, worst, 1e-9, worst <= 1e-9)

    dom = mp.MaskedParityDomain(4)
    halves = {(c.r, c.a): mp.concept_half(c, dom, 0) for c in mp.all_concepts(4)}
    worst = 0.0
    for (r, a), h in halves.items():
        for r2 in range(16):
            ip = mp.inner_product_uniform(h, halves[(r2, a)])
            worst = max(worst, abs(ip - (0.5 if r == r2 else 0.0)))
    add("orthogonality-d4", 0, worst, 1e-9, worst <= 1e-9)
    norm_err = max(abs(math.sqrt(mp.inner_product_uniform(h, h)) - 1 / math.sqrt(2)) for h in halves.values())
    add("norm-d4", 0, norm_err, 1e-9, norm_err <= 1e-9)

    for k in range(cases):
        table = rng.uniform(-1, 1, size=(dom.size, 2))
        s = mp.parseval_sum(table, dom)
        add("parseval-d4", k, s, 1 + 1e-9, s <= 1 + 1e-9)
    dom8 = mp.MaskedParityDomain(8)
    for k in range(int(p.get("bad_fraction_queries", 100))):
        table = rng.choice([-1.0, 1.0], size=(dom8.size, 2))
        frac = mp.bad_concept_fraction(table, dom8)
        add("bad-fraction-d8", k, frac, 2 ** (-8 / 3), frac <= 2 ** (-8 / 3))

    mc = int(p.get("tail_trials", 20000))
    for n, mu, phi in [(50, 0.3, 0.5), (100, 0.1, 0.8), (200, 0.5, 0.2), (400, 0.05, 1.0)]:
        means = rng.binomial(n, mu, size=mc) / n
        up, lo = bound_chernoff_mult(n, mu, phi)
        f_up = float(np.mean(means >= (1 + phi) * mu))
        f_lo = float(np.mean(means <= (1 - phi) * mu))
        add("chernoff-upper", f"n={n},mu={mu},phi={phi}", f_up, up, f_up <= up)
        add("chernoff-lower", f"n={n},mu={mu},phi={phi}", f_lo, lo, f_lo <= lo)
    for n, delta in [(20, 0.2), (50, 0.15), (100, 0.1), (400, 0.05)]:
        xs = rng.uniform(-1, 1, size=(mc, n)).mean(axis=1)
        f = float(np.mean(np.abs(xs) >= delta))
        bound = bound_hoeffding(n, delta, -1, 1)
        add("hoeffding", f"n={n},delta={delta}", f, bound, f <= bound)
    for n, delta, lam in [(200, 0.5, 2.0), (500, 0.3, 1.5), (1000, 0.4, 4.0), (100, 0.9, 1.2)]:
        xs = laplace_sample(lam, rng, size=(mc, n)).mean(axis=1)
        bound = bound_laplace_sum(n, delta, lam)
        f1 = float(np.mean(xs >= delta))
        f2 = float(np.mean(np.abs(xs) >= delta))
        add("laplace-sum-one-sided", f"n={n},delta={delta},scale={lam}", f1, bound, f1 <= bound)
        add("laplace-sum-two-sided", f"n={n},delta={delta},scale={lam}", f2, 2 * bound, f2 <= 2 * bound)

    by = {}
    for r in recs:
        by.setdefault(r["identity"], []).append(r["ok"])
    summary = {"identities": {k: all(v) for k, v in by.items()}, "pass": all(r["ok"] for r in recs)}
    return ExperimentResult(ExperimentConfig("identities", p, seed), recs, summary)


EXPERIMENTS: dict[str, Callable[..., ExperimentResult]] = {
    "learn-parity": learn_parity,
    "exp-mech": exp_mech,
    "verify-dp": verify_dp,
    "simulate-sq-by-local": simulate_sq_by_local,
    "simulate-local-by-sq": simulate_local_by_sq,
    "masked-parity-adaptive": masked_parity_adaptive,
    "separation": separation,
    "sweep": sweep,
    "identities": identities,
}


def run(experiment: str, params: dict, seed: int, workers: int = 1, name: str | None = None) -> ExperimentResult:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    if seed is None:
        raise ConfigError("seed is mandatory")
    t0 = time.perf_counter()
    res = EXPERIMENTS[experiment](params, int(seed), workers)
    res.wall_clock = time.perf_counter() - t0
    res.config.seed = int(seed)
    res.config.name = name or experiment
    return res
