"""Named experiment presets.

Each preset supplies default config blocks and a ``run`` that writes CSV
files into a directory and returns ``(files, summary)``. The CLI adds the
manifest.
"""

from __future__ import annotations

import copy
import csv
import math
from pathlib import Path

import numpy as np

from . import estimation, localization, probe
from .config import OUTPUT_DEFAULTS, RUN_DEFAULTS, ExperimentConfig
from .errors import ConfigError
from .inverse_hmm import conditional_mean, run_inverse_hmm
from .model import AdversaryPolicy, HMMModel, QuantizedPolicyChannel, make_rng, simulate_chain
from .particle import run_particle_filter
from .social import (
    SocialModel,
    inverse_social_step,
    partition_likelihood_regions,
    regions_to_csv,
    simulate_social,
    social_tree,
)


def _num(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else _num(c) for c in r])
    return Path(path)


SCALAR_MODEL = {"A": 0.4, "Q": 2.0, "R": 1.0, "sigma_eps2": 1.0, "phi": "identity"}
C_TRUE = [0.5, 1.5, 2.0, 3.0]

HMM_MODEL = {
    "P": [[0.7, 0.3], [0.2, 0.8]],
    "B": [[0.8, 0.2], [0.3, 0.7]],
    "pi0": [0.5, 0.5],
    "channel": {"g": [0.0, 1.0], "thresholds": [0.5], "confusion": [[0.85, 0.15], [0.2, 0.8]]},
}


def _scalar_setup(cfg: ExperimentConfig) -> estimation.ScalarSetup:
    m = cfg.model
    if m["phi"] not in ("identity", "inv-one-plus"):
        raise ConfigError(f"model.phi: unknown map {m['phi']!r} (choose identity or inv-one-plus)")
    if not abs(m["A"]) < 1:
        raise ConfigError("model.A: the stationary prior needs |A| < 1")
    if m["Q"] <= 0 or m["R"] <= 0 or m["sigma_eps2"] <= 0:
        raise ConfigError("model.Q, model.R and model.sigma_eps2 must be positive")
    return estimation.ScalarSetup(float(m["A"]), float(m["Q"]), float(m["R"]), float(m["sigma_eps2"]),
                                  int(cfg.run["horizon"]), m["phi"])


def hmm_from_block(m) -> HMMModel:
    ch = m["channel"]
    channel = QuantizedPolicyChannel(ch["g"], ch["thresholds"], ch["confusion"])
    return HMMModel(np.array(m["P"], float), np.array(m["B"], float), np.array(m["pi0"], float), channel)


class Preset:
    name = ""
    description = ""
    model: dict = {}
    run_block: dict = {}
    params: dict = {}

    def defaults(self):
        return {
            "experiment": self.name,
            "model": copy.deepcopy(self.model),
            "run": {**RUN_DEFAULTS, **copy.deepcopy(self.run_block)},
            "output": copy.deepcopy(OUTPUT_DEFAULTS),
            "params": copy.deepcopy(self.params),
        }

    def run(self, cfg: ExperimentConfig, out: Path):
        raise NotImplementedError


class LikelihoodCurvesPreset(Preset):
    name = "fig3"
    description = "classic vs inverse log-likelihood of the adversary's gain, one CSV per true gain"
    model = SCALAR_MODEL
    run_block = {"horizon": 1000, "seeds": 20}
    params = {"c_true": C_TRUE, "grid_points": 1000, "grid_upper": 10.0}

    def run(self, cfg, out):
        setup = _scalar_setup(cfg)
        grid = estimation.default_c_grid(int(cfg.params["grid_points"]), float(cfg.params["grid_upper"]))
        files, summary = [], []
        for c in cfg.params["c_true"]:
            res = estimation.likelihood_curves(float(c), cfg.seeds, setup, grid)
            cl, iv = res.classic.mean(axis=0), res.inverse.mean(axis=0)
            files.append(write_csv(out / f"fig3_c{c:g}.csv", ["C", "classic_loglik", "inverse_loglik"],
                                   zip(grid, cl, iv)))
            summary.append({
                "c_true": float(c),
                "classic_argmax_mean": float(res.classic_argmax.mean()),
                "inverse_argmax_mean": float(res.inverse_argmax.mean()),
                "classic_curvature": res.classic_curve.curvature_at_max,
                "inverse_curvature": res.inverse_curve.curvature_at_max,
                "curvature_ratio": res.curvature_ratio,
            })
        return files, {"curves": summary}


class CrbTablePreset(Preset):
    name = "table1"
    description = "Monte Carlo Cramer-Rao bounds for the gain, classic vs inverse"
    model = SCALAR_MODEL
    run_block = {"horizon": 1000, "seeds": [0], "replicates": 2000}
    params = {"c_true": C_TRUE}

    def run(self, cfg, out):
        setup = _scalar_setup(cfg)
        rows = []
        for c in cfg.params["c_true"]:
            rep = estimation.crb_linear_gaussian(float(c), cfg.run["replicates"], cfg.seeds[0], setup)
            rows.append((float(c), rep.crb_classic, rep.crb_inverse, rep.standard_errors[0],
                         rep.standard_errors[1], rep.ratio))
        f = write_csv(out / "table1.csv",
                      ["c_true", "crb_classic", "crb_inverse", "se_classic", "se_inverse", "ratio"], rows)
        return [f], {"replicates": cfg.run["replicates"]}


class GamePhase(Preset):
    name = "game-phase"
    description = "k * Sigma_k of the sequential game for several action noise levels"
    run_block = {"horizon": 10000}
    params = {"sigma_eps2": [0.0, 0.01, 1.0, 100.0], "mc_seeds": 0}

    def run(self, cfg, out):
        N = int(cfg.run["horizon"])
        rows = []
        final = {}
        for s2 in cfg.params["sigma_eps2"]:
            ks, sig = localization.game_precision_track(N, float(s2))
            rows.extend((float(s2), k, s, k * s) for k, s in zip(ks, sig))
            final[repr(float(s2))] = float(ks[-1] * sig[-1])
        files = [write_csv(out / "game_phase.csv", ["sigma_eps2", "k", "Sigma", "k_times_Sigma"], rows)]
        n_mc = int(cfg.params["mc_seeds"])
        if n_mc > 0:
            mc = [(float(s2), localization.game_mse(float(s2), N, np.arange(n_mc)), 2.0 / N)
                  for s2 in cfg.params["sigma_eps2"]]
            files.append(write_csv(out / "game_mc.csv", ["sigma_eps2", "mse", "two_over_k"], mc))
        return files, {"k_times_Sigma_final": final}


class InverseHmmDemo(Preset):
    name = "inverse-hmm-demo"
    description = "exact inverse HMM filter on one simulated record, with the belief tree dump"
    model = HMM_MODEL
    run_block = {"horizon": 6, "seeds": [0]}
    params = {"depth_cap": 12, "merge_tol": None}

    def run(self, cfg, out):
        m = hmm_from_block(cfg.model)
        files = []
        for sd in cfg.seeds:
            rec = simulate_chain(m, int(cfg.run["horizon"]), sd)
            tree, means = run_inverse_hmm(m, rec.x, rec.a, int(cfg.params["depth_cap"]), cfg.params["merge_tol"])
            rec.to_csv(out / f"trajectory_seed{sd}.csv")
            tree.to_csv(out / f"belief_tree_seed{sd}.csv")
            X = means.shape[1]
            rows = [(k, *means[k], *rec.pi[k]) for k in range(len(means))]
            write_csv(out / f"inverse_means_seed{sd}.csv",
                      ["k"] + [f"mean_{i}" for i in range(X)] + [f"true_pi_{i}" for i in range(X)], rows)
            files += [out / f"trajectory_seed{sd}.csv", out / f"belief_tree_seed{sd}.csv",
                      out / f"inverse_means_seed{sd}.csv"]
        return files, {}


class ParticleVsExact(Preset):
    name = "particle-vs-exact"
    description = "particle inverse filter against the exact tree filter for growing particle counts"
    model = HMM_MODEL
    run_block = {"horizon": 8, "seeds": 20}
    params = {"particles": [100, 400, 1600, 5000], "ess_threshold": 0.5, "resampler": "systematic",
              "depth_cap": 12}

    def run(self, cfg, out):
        m = hmm_from_block(cfg.model)
        N = int(cfg.run["horizon"])
        recs = []
        for sd in cfg.seeds:
            rec = simulate_chain(m, N, sd)
            _, ex = run_inverse_hmm(m, rec.x, rec.a, int(cfg.params["depth_cap"]))
            recs.append((sd, rec, ex))
        rows, ess_rows = [], []
        for n in cfg.params["particles"]:
            se = []
            for sd, rec, ex in recs:
                pr = run_particle_filter(m, rec.x, rec.a, int(n), seed=sd + 1_000_000,
                                         ess_threshold=float(cfg.params["ess_threshold"]),
                                         resampler=cfg.params["resampler"])
                se.append(np.mean(np.sum((pr.means[1:] - ex[1:]) ** 2, axis=1)))
                ess_rows += [(sd, int(n), k + 1, e) for k, e in enumerate(pr.ess)]
            rows.append((int(n), math.sqrt(float(np.mean(se)))))
        f1 = write_csv(out / "particle_rmse.csv", ["particles", "rmse"], rows)
        f2 = write_csv(out / "particle_ess.csv", ["seed", "particles", "k", "ess"], ess_rows)
        return [f1, f2], {"rmse": {str(n): r for n, r in rows}}


class SocialCascade(Preset):
    name = "social-cascade"
    description = "myopic social learning, its action-likelihood regions and the inverse filter"
    model = {
        "P": [[1.0, 0.0], [0.0, 1.0]],
        "B": [[0.9, 0.1], [0.2, 0.8]],
        "costs": [[0.0, 1.0], [1.0, 0.0]],
        "G_ua": [[0.9, 0.1], [0.15, 0.85]],
        "pi0": [0.5, 0.5],
    }
    run_block = {"horizon": 10, "seeds": [0]}
    params = {"depth_cap": 12}

    def run(self, cfg, out):
        m = cfg.model
        sm = SocialModel(np.array(m["P"], float), np.array(m["B"], float), np.array(m["costs"], float),
                         np.array(m["G_ua"], float), np.array(m["pi0"], float))
        files = []
        regions = partition_likelihood_regions(sm)
        if sm.P.shape[0] == 2:
            regions_to_csv(regions, out / "social_regions.csv")
            files.append(out / "social_regions.csv")
        for sd in cfg.seeds:
            rec = simulate_social(sm, int(cfg.run["horizon"]), sd)
            tree = social_tree(sm, int(cfg.params["depth_cap"]))
            means = [sm.pi0]
            for k in range(rec.horizon):
                tree = inverse_social_step(tree, rec.x[k + 1], rec.a[k], sm)
                means.append(conditional_mean(tree))
            X = sm.P.shape[0]
            rows = []
            for k in range(rec.horizon + 1):
                head = [k, int(rec.x[k])] + (["", "", ""] if k == 0 else
                                             [int(rec.y[k - 1]), int(rec.u[k - 1]), int(rec.a[k - 1])])
                rows.append(head + list(rec.pi[k]) + list(means[k]))
            files.append(write_csv(out / f"social_seed{sd}.csv",
                                   ["k", "x", "y", "u", "a"] + [f"public_pi_{i}" for i in range(X)]
                                   + [f"inverse_mean_{i}" for i in range(X)], rows))
        return files, {"regions": len(regions)}


class GammaLocalization(Preset):
    name = "gamma-localization"
    description = "Delta dynamics and the Gamma precision posterior (both rate conventions) vs grid Bayes"
    model = {"lam": [1.0, 2.0, 3.0], "mu": [0.0, 1.0, 2.0], "delta0": [1.0, 1.0, 1.0], "T": 4,
             "true_location": 0}
    run_block = {"horizon": 20, "seeds": [0]}
    params = {"grid_points": 20000}

    def run(self, cfg, out):
        m = cfg.model
        pm = localization.PowerModel(m["lam"], m["mu"], int(m["T"]), m["delta0"])
        X = pm.lam.size
        x_true = int(m["true_location"])
        if not 0 <= x_true < X:
            raise ConfigError(f"model.true_location: must lie in [0, {X - 1}]")
        rows = []
        worst = {"block-sum": 0.0, "conjugate": 0.0}
        for sd in cfg.seeds:
            rng = make_rng(sd, 0)
            delta = pm.delta0.copy()
            delta[0] = 0.0
            S = 0.0
            for k in range(1, int(cfg.run["horizon"]) + 1):
                y = rng.exponential(1.0 / pm.lam[x_true])
                S += y
                delta = localization.delta_dynamics_step(delta, y, pm.lam)
                if np.any(delta[1:] == 0):
                    continue
                a = localization.power_observation(delta, pm.mu, rng, pm.T)
                prior = localization.GammaDist(float(k), float(pm.lam[0]))
                for i in range(1, X):
                    post = {md: localization.gamma_posterior(prior, a[:, i - 1], pm.mu[i], md)
                            for md in localization.GAMMA_MODES}
                    hi = max(d.shape / d.rate for d in post.values()) * 20
                    grid = np.linspace(hi / cfg.params["grid_points"], hi, int(cfg.params["grid_points"]))
                    ref = localization.precision_posterior_grid(prior, a[:, i - 1], pm.mu[i], grid)
                    tv = {md: localization.grid_total_variation(d.pdf(grid), ref, grid) for md, d in post.items()}
                    for md in tv:
                        worst[md] = max(worst[md], tv[md])
                    rows.append((sd, k, i, delta[i], S, post["block-sum"].shape, post["block-sum"].rate,
                                 post["conjugate"].rate, tv["block-sum"], tv["conjugate"]))
        f = write_csv(out / "gamma_localization.csv",
                      ["seed", "k", "location", "delta", "S_k", "shape", "rate_block_sum", "rate_conjugate",
                       "tv_block_sum_vs_grid", "tv_conjugate_vs_grid"], rows)
        return [f], {"max_tv": worst}


class ProbeDominance(Preset):
    name = "probe-dominance"
    description = "copositive dominance certificates, samplewise MLR ordering and SNR ordering"
    model = {"B": [[0.8, 0.2], [0.3, 0.7]], "pi0": [0.5, 0.5], "stopping_low": [0.2, 0.3],
             "stopping_high": [0.45, 0.48], "g": [0.0, 1.0], "sigma_eps2": 1.0}
    run_block = {"horizon": 50, "seeds": 100, "replicates": 400}
    params = {"p": 0.3, "q": 0.7, "snr_burn_in": 0}

    def run(self, cfg, out):
        m, p = cfg.model, cfg.params
        B = np.array(m["B"], float)
        pi0 = np.array(m["pi0"], float)
        pairs = {"tp2": probe.tp2_example_pair(), "absorbing": probe.absorbing_example_pair(p["p"], p["q"]),
                 "stopping": (probe.stopping_matrix(m["stopping_low"]), probe.stopping_matrix(m["stopping_high"]))}
        cert_rows, ord_rows, snr_rows = [], [], []
        N = int(cfg.run["horizon"])
        for name, (P1, P2) in pairs.items():
            for direction, (a, b) in (("forward", (P1, P2)), ("reversed", (P2, P1))):
                ok, certs = probe.copositive_dominates(a, b)
                for c in certs:
                    cert_rows.append((name, direction, c.j, c.verdict, c.min_value,
                                      " ".join(repr(float(v)) for v in c.witness)))
            X = P1.shape[0]
            Bx = B if X == 2 else _tp2_sensor(X)
            p0 = pi0 if X == 2 else np.full(X, 1.0 / X)
            ord_rows.append((name, probe.samplewise_mlr_ordering_check(P1, P2, Bx, p0, N, cfg.seeds)))
            g = np.array(m["g"], float) if X == 2 else np.arange(X, dtype=float)
            pol = AdversaryPolicy(g, lambda s: s)
            for lab, P in (("low", P1), ("high", P2)):
                est = probe.empirical_snr(P, Bx, p0, pol, float(m["sigma_eps2"]), N, cfg.run["replicates"],
                                          cfg.seeds[0], burn_in=int(p["snr_burn_in"]))
                snr_rows.append((name, lab, est.value, est.se))
        files = [
            write_csv(out / "dominance_certificates.csv",
                      ["pair", "direction", "j", "verdict", "min_quadratic_form", "witness"], cert_rows),
            write_csv(out / "samplewise_mlr.csv", ["pair", "violation_fraction"], ord_rows),
            write_csv(out / "snr.csv", ["pair", "matrix", "snr", "se"], snr_rows),
        ]
        return files, {}


def _tp2_sensor(X, width=1.0):
    """Discretised Gaussian kernel, which is TP2."""
    i = np.arange(X)
    K = np.exp(-((i[:, None] - i[None, :]) ** 2) / (2 * width**2))
    return K / K.sum(axis=1, keepdims=True)


class ProbeSpsa(Preset):
    name = "probe-spsa"
    description = "SPSA search over the probe transition matrix minimising the sensor-estimate variance"
    model = {"theta_B": 0.8, "confusion": [[0.9, 0.1], [0.1, 0.9]], "threshold": 0.5,
             "start_P": [[0.95, 0.05], [0.05, 0.95]]}
    run_block = {"horizon": 200, "seeds": [0], "replicates": 8}
    params = {"iterations": 200, "delta": 0.1, "gamma": 0.602, "eps": 10.0, "s": 10.0, "zeta": 0.7,
              "particles": 128, "grid_points": 24}

    def run(self, cfg, out):
        m, p = cfg.model, cfg.params
        sc = probe.SpsaConfig(float(p["delta"]), float(p["gamma"]), float(p["eps"]), float(p["s"]),
                              float(p["zeta"]), int(p["iterations"]), int(cfg.run["horizon"]),
                              int(cfg.run["replicates"]))
        obj = probe.ProbeObjective(theta_B=float(m["theta_B"]), horizon=sc.horizon, replicates=sc.replicates,
                                   particles=int(p["particles"]),
                                   grid=np.linspace(0.55, 0.99, int(p["grid_points"])),
                                   threshold=float(m["threshold"]), confusion=np.array(m["confusion"], float))
        theta0 = probe.stochastic_to_spherical(np.array(m["start_P"], float))[:, 0]
        theta, tr = probe.spsa_optimize(sc, obj, theta0, seed=cfg.seeds[0])
        rows = []
        for n, (th, J) in enumerate(zip(tr.thetas, tr.values + [float("nan")])):
            P = probe.spherical_to_stochastic(th.reshape(2, 1))
            rows.append((n, th[0], th[1], P[0, 0], P[1, 0], J))
        f = write_csv(out / "spsa_trace.csv", ["iteration", "theta_1", "theta_2", "P_11", "P_21", "J"], rows)
        ma = probe.moving_average(tr.values, 20) if len(tr.values) >= 20 else np.array([np.nan])
        P = probe.spherical_to_stochastic(theta.reshape(2, 1))
        return [f], {"final_P": P.tolist(), "first_window": float(ma[0]), "last_window": float(ma[-1]),
                     "evaluations": tr.evaluations, "skipped": tr.skipped}


PRESETS = {p.name: p for p in (LikelihoodCurvesPreset(), CrbTablePreset(), GamePhase(), InverseHmmDemo(), ParticleVsExact(),
                               SocialCascade(), GammaLocalization(), ProbeDominance(), ProbeSpsa())}
