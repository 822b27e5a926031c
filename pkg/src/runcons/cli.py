"""Command-line front end: scenario files in, CSV tables out.

One subcommand per experiment family plus a `reproduce` command that runs
bundled scenarios for the named experiment tags.  All CSV output uses `.`
decimals, `,` separators, LF line endings, a mandatory header row, and floats
printed with 12 significant digits, so identical seeds give byte-identical
files.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from importlib import resources

import numpy as np

from . import analysis, montecarlo, scenario as scn, stats
from .consensus import ConsensusRun, WeightMode
from .detectors import sequential_design
from .network import (
    NetworkTopology,
    TopologyError,
    effective_eigenvalues,
    expected_gossip_matrix,
    sample_gossip_matrix,
)
from .scenario import ScenarioError, ScenarioFile
from .stats import QuadratureError

OUT_DIR_ENV = "RUNCONS_OUT_DIR"


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(format_cell(cell) for cell in row) + "\n")
    print(f"wrote {path}: {len(rows)} rows")


def resolve_output(path: str, override: str | None) -> str:
    chosen = override if override else path
    if os.path.isabs(chosen):
        return chosen
    return os.path.join(os.environ.get(OUT_DIR_ENV, "."), chosen)


def with_suffix(path: str, suffix: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}_{suffix}{ext or '.csv'}"


# ---------------------------------------------------------------------------
# Scenario wiring
# ---------------------------------------------------------------------------

def model_from_scenario(sc: ScenarioFile, theta: float | None = None) -> stats.HypothesisModel:
    section = sc.sections.get("model")
    if section is None:
        raise ScenarioError("missing required section [model]")
    family = section.get("family")
    theta0 = float(section.get("theta0", 0.0))
    if family == "gaussian":
        variance = float(sc.require("model", "variance"))
        return stats.gaussian_shift_model(variance, theta if theta is not None else theta0, theta0)
    if family == "gaussian_mixture":
        weight = float(sc.require("model", "weight"))
        v1 = float(sc.require("model", "variance1"))
        v2 = float(sc.require("model", "variance2"))
        return stats.mixture_shift_model(weight, v1, v2, theta if theta is not None else theta0, theta0)
    if family == "variance_change":
        v0 = float(sc.require("model", "variance0"))
        v1 = float(sc.require("model", "variance1"))
        return stats.variance_change_model(v0, v1)
    raise ScenarioError(f"unknown model family {family!r}")


def nonlinearity_from_scenario(sc: ScenarioFile, model: stats.HypothesisModel):
    name = str(sc.get("model", "nonlinearity", "identity"))
    if name == "identity":
        return stats.Identity()
    if name == "score":
        return stats.score_nonlinearity(model)
    if name == "llr":
        return stats.llr_nonlinearity(model)
    raise ScenarioError(f"unknown nonlinearity {name!r}")


def noise_variance(sc: ScenarioFile) -> float:
    """Variance of the raw observation under the no-signal parameter."""
    family = sc.get("model", "family")
    if family == "gaussian":
        return float(sc.require("model", "variance"))
    if family == "gaussian_mixture":
        w = float(sc.require("model", "weight"))
        return w * float(sc.require("model", "variance1")) + (1.0 - w) * float(
            sc.require("model", "variance2")
        )
    raise ScenarioError(f"noise variance undefined for model family {family!r}")


def mc_params(sc: ScenarioFile, args) -> tuple[int, int, int]:
    section = sc.sections.get("montecarlo", {})
    trials = args.trials if args.trials is not None else int(section.get("trials", 10000))
    seed = args.seed if args.seed is not None else int(section.get("seed", 0))
    threads = args.threads if args.threads is not None else int(section.get("threads", 1))
    return trials, seed, threads


def scenario_label(sc: ScenarioFile) -> str:
    return str(sc.get("experiment", "label", sc.kind))


# ---------------------------------------------------------------------------
# Trajectory dump (shared by several subcommands)
# ---------------------------------------------------------------------------

def dump_trajectory(
    sc: ScenarioFile,
    topology: NetworkTopology,
    path: str,
    seed: int,
    n_slots: int,
    mode: WeightMode,
    include_new_sample: bool,
) -> None:
    model = model_from_scenario(sc) if "model" in sc.sections else None
    nonlin = nonlinearity_from_scenario(sc, model) if model is not None else stats.Identity()
    dist = model.null if model is not None else stats.Gaussian(0.0, 1.0)
    v = int(sc.get("topology", "v", 1))
    rng = montecarlo.chunk_rng(seed, 10**6)
    run = ConsensusRun(topology.M, mode, include_new_sample)
    rows = []
    for _ in range(n_slots):
        W = sample_gossip_matrix(topology, v, rng) if topology.M > 1 else np.eye(1)
        x = dist.sample(rng, topology.M)
        run.step(W, nonlin(x))
        central = run.centralized_state()
        err = run.error_vector()
        for j in range(topology.M):
            rows.append([run.n, j, run.state[j], central, err[j]])
    write_csv(path, ["n", "node", "state", "centralized", "error"], rows)


# ---------------------------------------------------------------------------
# Subcommand runners
# ---------------------------------------------------------------------------

def run_spectral(sc: ScenarioFile, args) -> None:
    topology = scn.topology_from_scenario(sc)
    summary = expected_gossip_matrix(topology)
    out = resolve_output(str(sc.require("output", "path")), args.out)
    write_csv(
        out,
        ["kind", "m", "n_pairs", "lambda_U", "lambda_L"],
        [[sc.get("topology", "kind"), topology.M, len(topology.pairs), summary.lambda_U, summary.lambda_L]],
    )
    print(f"lambda_U = {summary.lambda_U:.6f}, lambda_L = {summary.lambda_L:.6f}")


def run_bounds(sc: ScenarioFile, args) -> None:
    topology = scn.topology_from_scenario(sc)
    v = int(sc.get("topology", "v", 1))
    n_max = int(sc.get("experiment", "n_max", 200))
    include_new = bool(sc.get("experiment", "include_new_sample", False))
    trials, seed, threads = mc_params(sc, args)

    summary = expected_gossip_matrix(topology)
    lam_u, lam_l = effective_eigenvalues(summary, v)
    variant = (
        analysis.BoundVariant.NEW_SAMPLE_EXCHANGED
        if include_new
        else analysis.BoundVariant.NEW_SAMPLE_HELD
    )
    bounds = analysis.theorem_bounds(lam_u, lam_l, topology.M, n_max, variant)

    model = model_from_scenario(sc)
    study = montecarlo.estimate_covariance(
        topology,
        v,
        n_max,
        trials,
        seed,
        mode=WeightMode.AVERAGING,
        include_new_sample=include_new,
        dist=model.null,
        sigma2=model.null.var,
        known_mean=model.null.mean,
        threads=threads,
    )

    out = resolve_output(str(sc.require("output", "path")), args.out)
    rows = []
    for k in range(n_max):
        rows.append([
            int(bounds.n[k]),
            bounds.psi_U[k],
            bounds.psi_L[k],
            bounds.gamma_lower[k],
            bounds.gamma_upper[k],
            bounds.rho_lower[k],
            bounds.rho_upper[k],
            bounds.approx_B_L[k],
            bounds.approx_B_U[k],
            study.gamma_est[k],
            study.gamma_se[k],
            study.rho_est[k],
            study.rho_se[k],
        ])
    write_csv(
        out,
        [
            "n", "psi_U", "psi_L",
            "gamma_minus1_lower", "gamma_minus1_upper",
            "one_minus_rho_lower", "one_minus_rho_upper",
            "approx_lower", "approx_upper",
            "gamma_est", "gamma_se", "rho_est", "rho_se",
        ],
        rows,
    )
    if args.dump_trajectory:
        dump_trajectory(
            sc, topology, resolve_output(args.dump_trajectory, None), seed,
            min(n_max, 200), WeightMode.AVERAGING, include_new,
        )


def _fss_point(sc: ScenarioFile, topology, v, n, trials, seed, threads, node):
    """One fixed-sample-size experiment at slot count n."""
    theta0 = float(sc.get("model", "theta0", 0.0))
    gamma_scale = float(sc.get("experiment", "gamma_scale", 1.0))
    p_f = float(sc.require("detector", "p_f"))
    theta_n = theta0 + gamma_scale / math.sqrt(n)
    model = model_from_scenario(sc, theta=theta_n)
    nonlin = nonlinearity_from_scenario(sc, model)
    m0 = stats.moments(model, nonlin, theta0, M=1)
    from .detectors import fss_threshold

    threshold = fss_threshold(p_f, n, m0, topology.M)
    study = montecarlo.estimate_error_probabilities(
        model, nonlin, topology, v, n, threshold, trials, seed, node=node, threads=threads
    )
    d = stats.efficacy(m0, topology.M)
    p_d_limit = analysis.fss_asymptotic_pd(p_f, gamma_scale, d)
    return threshold, study, p_d_limit


def run_fss(sc: ScenarioFile, args) -> None:
    topology = scn.topology_from_scenario(sc)
    trials, seed, threads = mc_params(sc, args)
    node = int(sc.get("detector", "node", 0))
    n_list = sc.get("experiment", "n_list") or [int(sc.get("experiment", "n_max", 100))]
    v_list = sc.get("experiment", "v_list") or [int(sc.get("topology", "v", 1))]
    label = scenario_label(sc)

    rows = []
    for v in v_list:
        for n in n_list:
            threshold, study, _ = _fss_point(sc, topology, int(v), int(n), trials, seed, threads, node)
            for stat_name, est in (
                ("p_f_centralized", study.p_f["centralized"]),
                ("p_f_node", study.p_f["node"]),
                ("p_d_centralized", study.p_d["centralized"]),
                ("p_d_node", study.p_d["node"]),
            ):
                rows.append([label, v, n, threshold, stat_name, est.value, est.std_err, est.count, est.truncated_count])
    out = resolve_output(str(sc.require("output", "path")), args.out)
    write_csv(
        out,
        ["scenario", "v", "n", "threshold", "statistic", "estimate", "std_err", "n_trials", "n_truncated"],
        rows,
    )
    if args.dump_trajectory:
        dump_trajectory(
            sc, topology, resolve_output(args.dump_trajectory, None), seed,
            int(max(n_list)), WeightMode.ACCUMULATING, True,
        )


def _sequential_point(sc: ScenarioFile, topology, v, p_e, snr, trials, seed, threads, node,
                      track_all_nodes=False):
    """Design and simulate one sequential experiment at a given SNR."""
    theta0 = float(sc.get("model", "theta0", 0.0))
    V = noise_variance(sc)
    r = 1.0 / (snr * V)
    theta_r = theta0 + 1.0 / math.sqrt(r)
    model = model_from_scenario(sc, theta=theta_r)
    nonlin = nonlinearity_from_scenario(sc, model)
    m0 = stats.moments(model, nonlin, theta0, M=1)
    mr = stats.moments(model, nonlin, theta_r, M=1)
    p_f, p_d = p_e, 1.0 - p_e
    detector = sequential_design(p_f, p_d, r, m0, mr, topology.M)
    d = stats.efficacy(m0, topology.M)
    asn0, asn1 = analysis.sequential_asymptotics(p_f, p_d, d)
    factor = float(sc.get("experiment", "max_n_factor", 100.0))
    max_n = max(10, int(math.ceil(factor * r * max(asn0, asn1))))
    study = montecarlo.estimate_stopping(
        model, nonlin, topology, v, detector, trials, seed,
        max_n=max_n, node=node, threads=threads, track_all_nodes=track_all_nodes,
    )
    asymptote = 0.5 * (asn0 + asn1) / V  # limit of E[N] * SNR
    return model, detector, study, asymptote, max_n, r


def run_sequential(sc: ScenarioFile, args) -> None:
    topology = scn.topology_from_scenario(sc)
    v = int(sc.get("topology", "v", 1))
    trials, seed, threads = mc_params(sc, args)
    node = int(sc.get("detector", "node", 0))
    measure = str(sc.get("experiment", "measure", "asn"))
    label = scenario_label(sc)
    p_e_values = sc.get("detector", "p_e_list") or [float(sc.require("detector", "p_e"))]
    snr_db_values = sc.get("experiment", "snr_db_list") or [-20.0]
    include_sprt = bool(sc.get("experiment", "include_sprt_baseline", False))

    if measure == "trajectory":
        _sequential_trajectory(sc, args, topology, v, float(p_e_values[0]), float(snr_db_values[0]))
        return

    rows = []
    for p_e in p_e_values:
        for snr_db in snr_db_values:
            snr = 10.0 ** (float(snr_db) / 10.0)
            model, detector, study, asymptote, max_n, r = _sequential_point(
                sc, topology, v, float(p_e), snr, trials, seed, threads, node
            )
            outputs = []
            for source in ("centralized", "node"):
                mean_n = study.mean_sample_number(source)
                pe_hat = study.error_probability(source)
                trunc = (
                    study.under_null[source].mean_n.truncated_count
                    + study.under_alt[source].mean_n.truncated_count
                )
                se = 0.5 * math.hypot(
                    study.under_null[source].mean_n.std_err,
                    study.under_alt[source].mean_n.std_err,
                )
                outputs.append((f"en_{source}", mean_n, se, trunc))
                outputs.append((f"en_snr_{source}", mean_n * snr, se * snr, trunc))
                outputs.append((f"pe_{source}", pe_hat, _pe_std_err(study, source), trunc))
            outputs.append(("en_snr_asymptote", asymptote, 0.0, 0))
            if include_sprt:
                sprt = montecarlo.estimate_sprt_stopping(
                    model, topology.M, float(p_e), 1.0 - float(p_e), trials, seed + 1,
                    max_n=max_n, threads=threads,
                )
                outputs.append(("en_snr_sprt", sprt.mean_sample_number() * snr, 0.0,
                                sprt.under_null.mean_n.truncated_count + sprt.under_alt.mean_n.truncated_count))
                outputs.append(("pe_sprt", sprt.error_probability(), 0.0, 0))
            if measure == "are":
                pe_hat = min(max(study.error_probability("node"), 1e-6), 0.49)
                matched = _matched_error_centralized(sc, topology, v, pe_hat, r, trials, seed + 2, threads)
                outputs.append(("en_matched_centralized", matched, 0.0, 0))
                outputs.append(("are_node", matched / study.mean_sample_number("node"), 0.0, 0))
            for stat_name, value, se, trunc in outputs:
                rows.append([label, p_e, snr_db, snr, stat_name, value, se, trials, trunc])
    out = resolve_output(str(sc.require("output", "path")), args.out)
    write_csv(
        out,
        ["scenario", "p_e", "snr_db", "snr", "statistic", "estimate", "std_err", "n_trials", "n_truncated"],
        rows,
    )
    if args.dump_trajectory:
        dump_trajectory(
            sc, topology, resolve_output(args.dump_trajectory, None), seed,
            200, WeightMode.ACCUMULATING, True,
        )


def _pe_std_err(study, source: str) -> float:
    return 0.5 * math.hypot(
        study.under_null[source].declare_h1.std_err,
        study.under_alt[source].declare_h1.std_err,
    )


def _matched_error_centralized(sc, topology, v, p_e, r, trials, seed, threads) -> float:
    """Mean sample number of the fusion test redesigned at the achieved error."""
    theta0 = float(sc.get("model", "theta0", 0.0))
    theta_r = theta0 + 1.0 / math.sqrt(r)
    model = model_from_scenario(sc, theta=theta_r)
    nonlin = nonlinearity_from_scenario(sc, model)
    m0 = stats.moments(model, nonlin, theta0, M=1)
    mr = stats.moments(model, nonlin, theta_r, M=1)
    detector = sequential_design(p_e, 1.0 - p_e, r, m0, mr, topology.M)
    d = stats.efficacy(m0, topology.M)
    asn0, asn1 = analysis.sequential_asymptotics(p_e, 1.0 - p_e, d)
    max_n = max(10, int(math.ceil(100.0 * r * max(asn0, asn1))))
    study = montecarlo.estimate_stopping(
        model, nonlin, topology, v, detector, trials, seed, max_n=max_n, threads=threads
    )
    return study.mean_sample_number("centralized")


def _sequential_trajectory(sc, args, topology, v, p_e, snr_db) -> None:
    """Single-trial centered statistic paths for every node and the oracle."""
    snr = 10.0 ** (snr_db / 10.0)
    theta0 = float(sc.get("model", "theta0", 0.0))
    V = noise_variance(sc)
    r = 1.0 / (snr * V)
    theta_r = theta0 + 1.0 / math.sqrt(r)
    model = model_from_scenario(sc, theta=theta_r)
    nonlin = nonlinearity_from_scenario(sc, model)
    m0 = stats.moments(model, nonlin, theta0, M=1)
    mr = stats.moments(model, nonlin, theta_r, M=1)
    detector = sequential_design(p_e, 1.0 - p_e, r, m0, mr, topology.M)
    trials, seed, _ = mc_params(sc, args)
    rng = montecarlo.chunk_rng(seed, 0)
    run = ConsensusRun(topology.M, WeightMode.ACCUMULATING, True)
    csum = 0.0
    rows = []
    crossed: dict[int | str, int] = {}
    M = topology.M
    slot = 0
    while len(crossed) < M + 1 and slot < 100_000:
        slot += 1
        W = sample_gossip_matrix(topology, v, rng) if M > 1 else np.eye(1)
        x = model.alt.sample(rng, M)
        t = nonlin(x)
        run.step(W, t)
        csum += float(t.sum())
        shift = slot * M * detector.eta_r
        central = csum - shift
        nodes = run.state - shift
        if "centralized" not in crossed and (central >= detector.b_r or central <= detector.a_r):
            crossed["centralized"] = slot
        for j in range(M):
            if j not in crossed and (nodes[j] >= detector.b_r or nodes[j] <= detector.a_r):
                crossed[j] = slot
        rows.append([slot, central, *nodes.tolist()])
    out = resolve_output(str(sc.require("output", "path")), args.out)
    write_csv(out, ["n", "centralized", *[f"node_{j}" for j in range(M)]], rows)
    times = [crossed.get(j) for j in range(M)]
    print(f"crossing slots: centralized={crossed.get('centralized')}, nodes={times}, "
          f"upper={detector.b_r:.6g}, lower={detector.a_r:.6g}")


def _change_quantities(sc: ScenarioFile):
    model = model_from_scenario(sc)
    llr = stats.llr_nonlinearity(model)
    d01 = stats.kl_divergence(model.null, model.alt)
    d10 = stats.kl_divergence(model.alt, model.null)
    var1 = stats.moments(model, llr, model.theta, M=1).sigma2
    return model, d01, d10, var1


def run_change(sc: ScenarioFile, args) -> None:
    topology = scn.topology_from_scenario(sc)
    M = topology.M
    v = int(sc.get("topology", "v", 1))
    trials, seed, threads = mc_params(sc, args)
    node = int(sc.get("detector", "node", 0))
    gamma_offset = float(sc.get("detector", "gamma_offset", 0.0))
    gamma_list = [float(g) for g in (sc.get("experiment", "gamma_list") or [])]
    if not gamma_list:
        raise ScenarioError("change experiments need experiment.gamma_list")
    families = [str(f) for f in (sc.get("experiment", "families") or ["centralized"])]
    measure = str(sc.get("experiment", "measure", "both"))
    label = scenario_label(sc)

    model, d01, d10, var1 = _change_quantities(sc)

    theory_rows = []
    for family in ("centralized", "running", "bank", "single"):
        m_eff = 1 if family == "single" else M
        for gamma in gamma_list:
            r_acc = float(analysis.false_alarm_rate_accurate(gamma, m_eff, d01))
            r_large = float(analysis.false_alarm_rate_large_gamma(gamma, m_eff, d01))
            if family == "bank":
                delay = analysis.bank_delay(gamma, M, d10, var1)
                d_acc, d_large = delay.integral, delay.castillo
            else:
                d_acc = float(analysis.delay_accurate(gamma, m_eff, d10))
                d_large = float(analysis.delay_large_gamma(gamma, m_eff, d10))
            theory_rows.append([family, gamma, r_acc, r_large, d_acc, d_large])
    out = resolve_output(str(sc.require("output", "path")), args.out)
    write_csv(
        with_suffix(out, "theory"),
        ["family", "gamma", "R_accurate", "R_largegamma", "D_accurate", "D_largegamma"],
        theory_rows,
    )

    mc_rows = []
    trial_rows = []
    for family in families:
        if family not in ("centralized", "running", "bank", "single"):
            raise ScenarioError(f"unknown change-detection family {family!r}")
        m_eff = 1 if family == "single" else M
        for gamma in gamma_list:
            r_pred = float(analysis.false_alarm_rate_accurate(gamma, m_eff, d01))
            runs = []
            if measure in ("rate", "both"):
                runs.append(("null", seed, int(math.ceil(100.0 / r_pred))))
            if measure in ("delay", "both"):
                d_pred = float(analysis.delay_accurate(gamma, m_eff, d10))
                runs.append(("alt", seed + 1, int(math.ceil(100.0 * max(d_pred, 10.0)))))
            for under, run_seed, max_n in runs:
                stops = montecarlo.page_run_lengths(
                    model, family, gamma + gamma_offset, M, trials, run_seed,
                    under=under, max_n=max_n, topology=topology, v=v, node=node, threads=threads,
                )
                finished = stops > 0
                est = montecarlo.Estimate.from_samples(stops[finished], truncated=int((~finished).sum()))
                if under == "null":
                    rate = 1.0 / est.value if est.value > 0 else float("nan")
                    rate_se = est.std_err / est.value**2 if est.value > 0 else float("nan")
                    mc_rows.append([label, family, gamma, "false_alarm_rate", rate, rate_se, est.count, est.truncated_count])
                    mc_rows.append([label, family, gamma, "mean_run_length_null", est.value, est.std_err, est.count, est.truncated_count])
                else:
                    mc_rows.append([label, family, gamma, "mean_delay", est.value, est.std_err, est.count, est.truncated_count])
                if args.dump_trials:
                    decision = "false_alarm" if under == "null" else "detection"
                    for t, stop in enumerate(stops):
                        trial_rows.append([
                            family, gamma, t, int(stop) if stop > 0 else max_n,
                            decision if stop > 0 else "truncated",
                        ])
    write_csv(
        out,
        ["scenario", "family", "gamma", "statistic", "estimate", "std_err", "n_trials", "n_truncated"],
        mc_rows,
    )
    if args.dump_trials:
        write_csv(
            resolve_output(args.dump_trials, None),
            ["mode", "gamma", "trial", "alarm_time", "decision"],
            trial_rows,
        )


def run_efficiency(sc: ScenarioFile, args) -> None:
    topology = scn.topology_from_scenario(sc)
    rate_list = [float(r) for r in (sc.get("experiment", "rate_list") or [])]
    if not rate_list:
        raise ScenarioError("efficiency experiments need experiment.rate_list")
    m_list = sc.get("experiment", "m_list")
    _, d01, d10, var1 = _change_quantities(sc)
    out = resolve_output(str(sc.require("output", "path")), args.out)

    if m_list:
        rows = []
        for M in m_list:
            for point in analysis.relative_efficiencies(rate_list, int(M), d01, d10, var1):
                rows.append([int(M), point.R, point.eta_cr, point.eta_sr, point.eta_br, point.eta_bs])
        write_csv(out, ["M", "R", "eta_cr", "eta_sr", "eta_br", "eta_bs"], rows)
    else:
        points = analysis.relative_efficiencies(rate_list, topology.M, d01, d10, var1)
        rows = [[p.R, p.eta_cr, p.eta_sr, p.eta_br, p.eta_bs] for p in points]
        write_csv(out, ["R", "eta_cr", "eta_sr", "eta_br", "eta_bs"], rows)


RUNNERS = {
    "spectral": run_spectral,
    "bounds": run_bounds,
    "fss": run_fss,
    "sequential": run_sequential,
    "change": run_change,
    "efficiency": run_efficiency,
}


# ---------------------------------------------------------------------------
# Figure-ready writers for the reproduce registry
# ---------------------------------------------------------------------------

def figure_fss(sc: ScenarioFile, args) -> None:
    """Wide detection-probability table: one row per (v, n)."""
    topology = scn.topology_from_scenario(sc)
    trials, seed, threads = mc_params(sc, args)
    node = int(sc.get("detector", "node", 0))
    n_list = [int(n) for n in sc.require("experiment", "n_list")]
    v_list = [int(v) for v in (sc.get("experiment", "v_list") or [int(sc.get("topology", "v", 1))])]
    rows = []
    for v in v_list:
        for n in n_list:
            threshold, study, p_d_limit = _fss_point(sc, topology, v, n, trials, seed, threads, node)
            rows.append([
                v, n, threshold,
                study.p_f["node"].value, study.p_f["node"].std_err,
                study.p_d["node"].value, study.p_d["node"].std_err,
                study.p_d["centralized"].value, study.p_d["centralized"].std_err,
                p_d_limit,
            ])
    out = resolve_output(str(sc.require("output", "path")), args.out)
    write_csv(
        out,
        ["v", "n", "threshold", "p_f_node", "p_f_node_se", "p_d_node", "p_d_node_se",
         "p_d_centralized", "p_d_centralized_se", "p_d_limit"],
        rows,
    )


def figure_sequential(sc: ScenarioFile, args) -> None:
    """Wide scaled-sample-number / error-probability table per grid point."""
    topology = scn.topology_from_scenario(sc)
    v = int(sc.get("topology", "v", 1))
    trials, seed, threads = mc_params(sc, args)
    node = int(sc.get("detector", "node", 0))
    measure = str(sc.get("experiment", "measure", "asn"))
    include_sprt = bool(sc.get("experiment", "include_sprt_baseline", False))
    p_e_values = sc.get("detector", "p_e_list") or [float(sc.require("detector", "p_e"))]
    snr_db_values = [float(s) for s in sc.require("experiment", "snr_db_list")]

    if measure == "trajectory":
        _sequential_trajectory(sc, args, topology, v, float(p_e_values[0]), snr_db_values[0])
        return

    header = ["p_e", "snr_db", "snr",
              "en_snr_centralized", "en_snr_centralized_se",
              "en_snr_node", "en_snr_node_se", "en_snr_asymptote",
              "pe_centralized", "pe_node",
              "n_truncated_centralized", "n_truncated_node"]
    if include_sprt:
        header += ["en_snr_sprt", "pe_sprt"]
    if measure == "are":
        header += ["en_node", "en_matched_centralized", "are_node"]

    rows = []
    for p_e in p_e_values:
        for snr_db in snr_db_values:
            snr = 10.0 ** (snr_db / 10.0)
            model, detector, study, asymptote, max_n, r = _sequential_point(
                sc, topology, v, float(p_e), snr, trials, seed, threads, node
            )
            en_c = study.mean_sample_number("centralized")
            en_n = study.mean_sample_number("node")
            se_c = 0.5 * math.hypot(study.under_null["centralized"].mean_n.std_err,
                                    study.under_alt["centralized"].mean_n.std_err)
            se_n = 0.5 * math.hypot(study.under_null["node"].mean_n.std_err,
                                    study.under_alt["node"].mean_n.std_err)
            row = [
                p_e, snr_db, snr,
                en_c * snr, se_c * snr, en_n * snr, se_n * snr, asymptote,
                study.error_probability("centralized"), study.error_probability("node"),
                study.under_null["centralized"].mean_n.truncated_count
                + study.under_alt["centralized"].mean_n.truncated_count,
                study.under_null["node"].mean_n.truncated_count
                + study.under_alt["node"].mean_n.truncated_count,
            ]
            if include_sprt:
                sprt = montecarlo.estimate_sprt_stopping(
                    model, topology.M, float(p_e), 1.0 - float(p_e), trials, seed + 1,
                    max_n=max_n, threads=threads,
                )
                row += [sprt.mean_sample_number() * snr, sprt.error_probability()]
            if measure == "are":
                pe_hat = min(max(study.error_probability("node"), 1e-6), 0.49)
                matched = _matched_error_centralized(sc, topology, v, pe_hat, r, trials, seed + 2, threads)
                row += [en_n, matched, matched / en_n]
            rows.append(row)
    out = resolve_output(str(sc.require("output", "path")), args.out)
    write_csv(out, header, rows)


def figure_change(sc: ScenarioFile, args) -> None:
    """Operating-characteristic table: theory plus simulated (R, D) points."""
    topology = scn.topology_from_scenario(sc)
    M = topology.M
    v = int(sc.get("topology", "v", 1))
    trials, seed, threads = mc_params(sc, args)
    node = int(sc.get("detector", "node", 0))
    gamma_offset = float(sc.get("detector", "gamma_offset", 0.0))
    gamma_list = [float(g) for g in sc.require("experiment", "gamma_list")]
    sim_families = set(str(f) for f in sc.require("experiment", "families"))
    measure = str(sc.get("experiment", "measure", "rate"))
    model, d01, d10, var1 = _change_quantities(sc)

    rows = []
    for family in ("centralized", "running", "bank", "single"):
        m_eff = 1 if family == "single" else M
        for gamma in gamma_list:
            r_acc = float(analysis.false_alarm_rate_accurate(gamma, m_eff, d01))
            r_large = float(analysis.false_alarm_rate_large_gamma(gamma, m_eff, d01))
            if family == "bank":
                delay = analysis.bank_delay(gamma, M, d10, var1)
                d_acc, d_large = delay.integral, delay.castillo
            else:
                d_acc = float(analysis.delay_accurate(gamma, m_eff, d10))
                d_large = float(analysis.delay_large_gamma(gamma, m_eff, d10))
            r_sim = r_sim_se = d_sim = d_sim_se = None
            trunc = 0
            if family in sim_families:
                r_pred = r_acc
                est = montecarlo.estimate_page_run_length(
                    model, family, gamma + gamma_offset, M, trials, seed,
                    under="null", max_n=int(math.ceil(100.0 / r_pred)),
                    topology=topology, v=v, node=node, threads=threads,
                )
                r_sim = 1.0 / est.value
                r_sim_se = est.std_err / est.value**2
                trunc = est.truncated_count
                if measure == "both":
                    est_d = montecarlo.estimate_page_run_length(
                        model, family, gamma + gamma_offset, M, trials, seed + 1,
                        under="alt", max_n=int(math.ceil(100.0 * max(d_acc, 10.0))),
                        topology=topology, v=v, node=node, threads=threads,
                    )
                    d_sim = est_d.value
                    d_sim_se = est_d.std_err
            rows.append([
                family, gamma, r_acc, r_large, d_acc, d_large,
                r_sim, r_sim_se, d_sim, d_sim_se, trials if family in sim_families else 0, trunc,
            ])
    out = resolve_output(str(sc.require("output", "path")), args.out)
    write_csv(
        out,
        ["family", "gamma", "R_accurate", "R_largegamma", "D_accurate", "D_largegamma",
         "R_sim", "R_sim_se", "D_sim", "D_sim_se", "n_trials", "n_truncated"],
        rows,
    )


REPRODUCE_TAGS: dict[str, list[tuple[str, str]]] = {
    "fig:bound1": [("fig_bound1_complete.scn", "bounds"), ("fig_bound1_kneighbor.scn", "bounds")],
    "fig:bound2": [("fig_bound2_complete.scn", "bounds"), ("fig_bound2_kneighbor.scn", "bounds")],
    "fig:FSS3": [("fig_fss3.scn", "figure_fss")],
    "fig:NmedGauss": [("fig_nmed_gauss.scn", "figure_sequential")],
    "fig:PerrGauss": [("fig_perr_gauss.scn", "figure_sequential")],
    "fig:AREGauss": [("fig_are_gauss.scn", "figure_sequential")],
    "fig:NmedMixt": [("fig_nmed_mixt.scn", "figure_sequential")],
    "fig:PerrMixt": [("fig_perr_mixt.scn", "figure_sequential")],
    "fig:stopping": [("fig_stopping.scn", "figure_sequential")],
    "fig:sim2": [("fig_sim2.scn", "figure_change")],
    "fig:sim1": [("fig_sim1.scn", "figure_change")],
    "fig:RE1": [("fig_re1.scn", "efficiency")],
    "fig:RE2": [("fig_re2.scn", "efficiency")],
}

FIGURE_RUNNERS = {
    "bounds": run_bounds,
    "efficiency": run_efficiency,
    "figure_fss": figure_fss,
    "figure_sequential": figure_sequential,
    "figure_change": figure_change,
}


def load_bundled_scenario(resource_name: str) -> ScenarioFile:
    text = resources.files("runcons").joinpath("scenarios", resource_name).read_text(encoding="utf-8")
    return scn.parse(text)


def run_reproduce(tag: str, args) -> None:
    if tag not in REPRODUCE_TAGS:
        raise ScenarioError(
            f"unknown experiment tag {tag!r}; known tags: {', '.join(sorted(REPRODUCE_TAGS))}"
        )
    for resource_name, runner_name in REPRODUCE_TAGS[tag]:
        sc = load_bundled_scenario(resource_name)
        _apply_overrides(sc, args)
        FIGURE_RUNNERS[runner_name](sc, args)


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _apply_overrides(sc: ScenarioFile, args) -> None:
    for item in args.set or []:
        if "=" not in item:
            raise ScenarioError(f"--set expects section.key=value, got '{item}'")
        dotted, _, value = item.partition("=")
        scn.apply_override(sc, dotted.strip(), value.strip())


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override montecarlo.seed")
    parser.add_argument("--trials", type=int, default=None, help="override montecarlo.trials")
    parser.add_argument("--threads", type=int, default=None, help="override montecarlo.threads")
    parser.add_argument("--out", default=None, help="override output.path")
    parser.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override any scenario key (repeatable)")
    parser.add_argument("--dump-trajectory", default=None, metavar="PATH",
                        help="also dump one state trajectory as CSV")
    parser.add_argument("--dump-trials", default=None, metavar="PATH",
                        help="also dump per-trial records (change experiments)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="runcons",
        description="Running-consensus inference experiments: scenario files in, CSV tables out.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        cmd = sub.add_parser(name, help=f"run a '{name}' scenario file")
        cmd.add_argument("scenario", help="path to the scenario file")
        _add_common(cmd)
    rep = sub.add_parser("reproduce", help="run a bundled experiment by tag")
    rep.add_argument("tag", help="experiment tag, e.g. fig:bound1")
    _add_common(rep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "reproduce":
            run_reproduce(args.tag, args)
        else:
            sc = scn.load(args.scenario)
            if sc.kind != args.command:
                raise ScenarioError(
                    f"scenario kind '{sc.kind}' does not match subcommand '{args.command}'"
                )
            _apply_overrides(sc, args)
            RUNNERS[args.command](sc, args)
    except (ScenarioError, TopologyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
