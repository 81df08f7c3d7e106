"""
Experiment orchestration: training, frozen-policy evaluation, policy comparison, n_cg sweeps,
action traces and the traffic-load profile. Every run writes its tables into one run directory.
"""
import json
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from mcgsim import console
from mcgsim.agent import AgentBundle
from mcgsim.config import ScenarioConfig
from mcgsim.episode import EpisodeResult, MCGEnvironment, episode_activations, run_episode
from mcgsim.errors import ConfigError, FeasibilityError, PreconditionError
from mcgsim.policies import LearnedPolicy, Policy, build_policy
from mcgsim.traffic import arrival_histogram, expected_arrivals_per_subframe

METRICS_COLUMNS = [
    "episode", "subframe", "policy", "n_cc", "n_ic", "n_sc", "n_suc", "n_fdec", "reward",
    "avg_latency_slots", "avg_latency_ms", "spill",
]
GRANT_COLUMNS = [
    "episode", "subframe", "policy", "grant", "n_ctu", "n_start", "n_repe", "arrivals",
    "n_collided", "n_singleton", "n_suc", "n_fdec", "wait_slots", "rtt_slots", "latency_slots",
    "actual_latency_slots",
]
TRAINING_COLUMNS = ["episode", "mean_reward", "total_reward", "epsilon", "loss"]
TRACE_COLUMNS = ["subframe", "ctu_index", "start_index", "ctu_action", "start_action", "n_suc"]

# evaluation episodes draw from seeds disjoint from training episodes 0..episodes-1
EVAL_EPISODE_OFFSET = 1_000_000
PathLike = Union[str, Path]


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _out_dir(out: PathLike) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- training -----------------------------------------------------------------

def train_policy(
    config: ScenarioConfig, out: Optional[PathLike] = None, episodes: Optional[int] = None
) -> Tuple[LearnedPolicy, pd.DataFrame]:
    """
    Train a fresh CMA-DDQN bundle for `episodes` (default config.episodes) epsilon-greedy
    episodes. With out set, training.csv and checkpoint/ are written there.
    """
    n_episodes = episodes or config.episodes
    if n_episodes != config.episodes:
        config = config.replace(episodes=n_episodes)
    policy = build_policy(config, "learned")
    schedule = config.epsilon_schedule()
    env = MCGEnvironment(config, policy.catalog)

    console.banner(f"Training CMA-DDQN: n_cg={config.n_cg}, {n_episodes} episodes")
    rows = []
    report_every = max(1, n_episodes // 10)
    for e in range(n_episodes):
        epsilon = schedule.value(e)
        result = run_episode(env, policy, e, config.seed, epsilon=epsilon, train=True)
        policy.bundle.episodes_done += 1
        rows.append({
            "episode": e + 1,
            "mean_reward": result.mean_reward,
            "total_reward": result.total_reward,
            "epsilon": epsilon,
            "loss": result.mean_loss,
        })
        if (e + 1) % report_every == 0 or e + 1 == n_episodes:
            console.info(
                f"  [{e + 1}/{n_episodes}] mean reward {result.mean_reward:.3f}, epsilon {epsilon:.3f}"
            )
    training = pd.DataFrame(rows, columns=TRAINING_COLUMNS)

    if out is not None:
        out = _out_dir(out)
        _write_csv(training, out / "training.csv")
        policy.bundle.save(out / "checkpoint")
        console.ok(f"checkpoint saved to {out / 'checkpoint'}")
    return policy, training


def load_learned_policy(config: ScenarioConfig, checkpoint: PathLike) -> LearnedPolicy:
    """Learned policy restored from a bundle directory trained on config's catalog."""
    path = Path(checkpoint)
    if not (path / "bundle.json").is_file():
        raise FileNotFoundError(f"no bundle.json under {path}")
    catalog = config.catalog()
    return LearnedPolicy(catalog, AgentBundle.load(path, catalog))


# -- evaluation ---------------------------------------------------------------

def evaluate_policy(
    config: ScenarioConfig, policy: Policy, episodes: Optional[int] = None
) -> List[EpisodeResult]:
    """
    Greedy (epsilon = 0) episodes on the evaluation seeds, run on config.workers threads.
    Results come back in episode order whatever order the workers finish in.
    """
    n = episodes or config.eval_episodes

    def one(k: int) -> EpisodeResult:
        env = MCGEnvironment(config, policy.catalog)
        return run_episode(env, policy, EVAL_EPISODE_OFFSET + k, config.seed, epsilon=0.0)

    console.info(f"Evaluating {policy.name} over {n} episodes ({config.workers} workers)")
    results: Dict[int, EpisodeResult] = {}
    if config.workers == 1:
        for k in range(n):
            results[k] = one(k)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            futures = {executor.submit(one, k): k for k in range(n)}
            for done, fut in enumerate(as_completed(futures), start=1):
                results[futures[fut]] = fut.result()
                console.info(f"  [{done}/{n}] episode {futures[fut] + 1} done")
    return [results[k] for k in range(n)]


def metrics_frame(results: Sequence[EpisodeResult]) -> pd.DataFrame:
    rows = []
    for k, ep in enumerate(results, start=1):
        for sf in ep.subframes:
            obs = sf.observation
            rows.append({
                "episode": k,
                "subframe": sf.subframe_index,
                "policy": ep.policy,
                "n_cc": obs.n_cc,
                "n_ic": obs.n_ic,
                "n_sc": obs.n_sc,
                "n_suc": obs.n_suc,
                "n_fdec": obs.n_fdec,
                "reward": sf.reward,
                "avg_latency_slots": sf.avg_latency_slots,
                "avg_latency_ms": sf.avg_latency_ms,
                "spill": sf.spill,
            })
    frame = pd.DataFrame(rows, columns=METRICS_COLUMNS)
    return frame.astype({"avg_latency_slots": float, "avg_latency_ms": float})


def grants_frame(results: Sequence[EpisodeResult]) -> pd.DataFrame:
    rows = []
    for k, ep in enumerate(results, start=1):
        for sf in ep.subframes:
            for g in sf.grants:
                rows.append({
                    "episode": k,
                    "subframe": sf.subframe_index,
                    "policy": ep.policy,
                    "grant": g.grant_index,
                    "n_ctu": g.n_ctu,
                    "n_start": g.n_start,
                    "n_repe": g.n_repe,
                    "arrivals": g.arrivals,
                    "n_collided": g.n_collided,
                    "n_singleton": g.n_singleton,
                    "n_suc": g.n_suc,
                    "n_fdec": g.n_fdec,
                    "wait_slots": g.latency.wait_slots,
                    "rtt_slots": g.latency.rtt_slots,
                    "latency_slots": g.latency.total_slots,
                    "actual_latency_slots": g.actual_latency_slots,
                })
    return pd.DataFrame(rows, columns=GRANT_COLUMNS).astype({"actual_latency_slots": float})


def series_frame(metrics: pd.DataFrame, grants: pd.DataFrame) -> pd.DataFrame:
    """Per-subframe means across evaluation episodes; undefined latencies are skipped."""
    per_subframe = metrics.groupby("subframe")
    arrivals = grants.groupby(["episode", "subframe"])["arrivals"].sum().groupby("subframe").mean()
    series = pd.DataFrame({
        "served": per_subframe["n_suc"].mean(),
        "avg_latency_slots": per_subframe["avg_latency_slots"].mean(),
        "avg_latency_ms": per_subframe["avg_latency_ms"].mean(),
        "idle_ctus": per_subframe["n_ic"].mean(),
        "collision_ctus": per_subframe["n_cc"].mean(),
        "arrivals": arrivals,
    })
    series.index.name = "subframe"
    return series.reset_index()


def summarize(metrics: pd.DataFrame, config: ScenarioConfig) -> Dict[str, object]:
    """Means over the evaluation episodes, all recomputable from metrics.csv."""
    peak = metrics[metrics["subframe"].between(config.peak_window_start, config.peak_window_end)]
    per_episode = metrics.groupby("episode")

    def mean(values) -> Optional[float]:
        values = values.dropna()
        return float(values.mean()) if len(values) else None

    return {
        "policy": str(metrics["policy"].iloc[0]) if len(metrics) else None,
        "episodes": int(metrics["episode"].nunique()),
        "subframes": int(metrics["subframe"].nunique()),
        "served_per_subframe": mean(metrics["n_suc"]),
        "served_per_episode": mean(per_episode["n_suc"].sum()),
        "avg_latency_slots": mean(metrics["avg_latency_slots"]),
        "avg_latency_ms": mean(metrics["avg_latency_ms"]),
        "peak_served": mean(peak["n_suc"]),
        "peak_latency_slots": mean(peak["avg_latency_slots"]),
        "idle_ctus": mean(metrics["n_ic"]),
        "collision_ctus": mean(metrics["n_cc"]),
        "failed_decodes": mean(metrics["n_fdec"]),
        "spill_per_episode": mean(per_episode["spill"].sum()),
    }


def write_evaluation(
    config: ScenarioConfig, results: Sequence[EpisodeResult], out: PathLike,
    extra: Optional[Dict[str, object]] = None,
) -> Path:
    out = _out_dir(out)
    metrics = metrics_frame(results)
    grants = grants_frame(results)
    metrics_path = _write_csv(metrics, out / "metrics.csv")
    _write_csv(grants, out / "grants.csv")
    _write_csv(series_frame(metrics, grants), out / "series.csv")
    summary = {**summarize(metrics, config), **(extra or {})}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "config.env").write_text(config.to_text())
    return metrics_path


def run_scenario(
    config: ScenarioConfig,
    out: PathLike,
    policy_name: Optional[str] = None,
    checkpoint: Optional[PathLike] = None,
) -> Path:
    """
    Run the selected policy and write metrics.csv, grants.csv, series.csv and summary.json.

    A learned policy is restored from checkpoint when given, otherwise trained first (training.csv
    and checkpoint/ land in the same directory). Returns the metrics.csv path.
    """
    name = policy_name or config.policy
    out = _out_dir(out)
    console.banner(f"Scenario: policy={name}, n_cg={config.n_cg}, seed={config.seed}")
    if name == "learned":
        if checkpoint is not None:
            policy = load_learned_policy(config, checkpoint)
        else:
            policy, _ = train_policy(config, out)
    else:
        policy = build_policy(config, name)
    results = evaluate_policy(config, policy)
    path = write_evaluation(config, results, out, {"n_cg": policy.catalog.n_cg,
                                                   "seed": config.seed})
    console.ok(f"metrics written to {path}")
    return path


# -- comparison and sweeps ----------------------------------------------------

def compare_metrics(
    series: pd.DataFrame, reference: pd.DataFrame
) -> pd.DataFrame:
    """Per-subframe served and latency ratios of series against reference."""
    if len(series) != len(reference) or not (
        series["subframe"].to_numpy() == reference["subframe"].to_numpy()
    ).all():
        raise PreconditionError("series cover different horizons")
    with np.errstate(divide="ignore", invalid="ignore"):
        served = series["served"].to_numpy() / reference["served"].to_numpy()
        lat = series["avg_latency_slots"].to_numpy() / reference["avg_latency_slots"].to_numpy()
    served = np.where(np.isfinite(served), served, np.nan)
    lat = np.where(np.isfinite(lat), lat, np.nan)
    return pd.DataFrame({"subframe": series["subframe"], "served_ratio": served,
                         "latency_ratio": lat})


def _peak_ratio(numerator: Optional[float], denominator: Optional[float]) -> Optional[float]:
    if numerator is None or not denominator:
        return None
    return numerator / denominator


def compare_policies(
    config: ScenarioConfig,
    policy_names: Sequence[str],
    out: PathLike,
    checkpoint: Optional[PathLike] = None,
) -> Dict[str, object]:
    """
    Evaluate each policy on the same seeds and report ratios against the SCG baseline (or the
    first policy when the baseline is not in the list).
    """
    if len(policy_names) < 2:
        raise ConfigError("compare needs at least two policies")
    out = _out_dir(out)
    reference_name = "scg-baseline" if "scg-baseline" in policy_names else policy_names[0]
    console.banner(f"Comparing {', '.join(policy_names)} against {reference_name}")

    series: Dict[str, pd.DataFrame] = {}
    summaries: Dict[str, Dict[str, object]] = {}
    for name in policy_names:
        if name in series:
            continue
        if name == "learned":
            if checkpoint is not None:
                policy = load_learned_policy(config, checkpoint)
            else:
                policy, _ = train_policy(config, out / "learned")
        else:
            policy = build_policy(config, name)
        results = evaluate_policy(config, policy)
        metrics = metrics_frame(results)
        series[name] = series_frame(metrics, grants_frame(results))
        summaries[name] = summarize(metrics, config)
        console.ok(f"{name}: {summaries[name]['served_per_subframe']:.3f} served per subframe")

    reference = series[reference_name]
    table = pd.DataFrame({"subframe": reference["subframe"]})
    ratios: Dict[str, Dict[str, Optional[float]]] = {}
    for name in dict.fromkeys(policy_names):
        ratio = compare_metrics(series[name], reference)
        table[f"served_{name}"] = series[name]["served"].to_numpy()
        table[f"latency_{name}"] = series[name]["avg_latency_slots"].to_numpy()
        table[f"served_ratio_{name}"] = ratio["served_ratio"].to_numpy()
        table[f"latency_ratio_{name}"] = ratio["latency_ratio"].to_numpy()
        ratios[name] = {
            "peak_served_ratio": _peak_ratio(summaries[name]["peak_served"],
                                             summaries[reference_name]["peak_served"]),
            "peak_latency_ratio": _peak_ratio(summaries[name]["peak_latency_slots"],
                                              summaries[reference_name]["peak_latency_slots"]),
        }
    _write_csv(table, out / "comparison.csv")
    comparison = {"reference": reference_name, "policies": summaries, "ratios": ratios}
    (out / "comparison.json").write_text(json.dumps(comparison, indent=2, sort_keys=True) + "\n")
    return comparison


def sweep_ncg(config: ScenarioConfig, n_cg_values: Sequence[int], out: PathLike) -> List[Dict[str, object]]:
    """
    Train and evaluate one learned policy per grant count. n_cg=1 is the SCG baseline; grant
    counts without a feasible catalog are skipped with a warning.
    """
    out = _out_dir(out)
    rows = []
    for n_cg in n_cg_values:
        if n_cg == 1:
            policy = build_policy(config, "scg-baseline")
            run_config = config
        else:
            try:
                run_config = config.replace(n_cg=n_cg)
                run_config.catalog()
            except (FeasibilityError, ConfigError) as e:
                console.warn(f"n_cg={n_cg} skipped: {e}")
                continue
            policy, _ = train_policy(run_config, out / f"ncg_{n_cg}")
        summary = summarize(metrics_frame(evaluate_policy(run_config, policy)), run_config)
        n_ctu, n_start = policy.catalog.sizes
        rows.append({
            "n_cg": n_cg,
            "policy": policy.name,
            "ctu_actions": n_ctu,
            "start_actions": n_start,
            "served_per_subframe": summary["served_per_subframe"],
            "peak_served": summary["peak_served"],
            "avg_latency_slots": summary["avg_latency_slots"],
            "peak_latency_slots": summary["peak_latency_slots"],
        })
        console.ok(f"n_cg={n_cg}: peak served {summary['peak_served']}")
    if not rows:
        raise FeasibilityError(f"none of n_cg={list(n_cg_values)} is feasible")
    _write_csv(pd.DataFrame(rows), out / "sweep.csv")
    return rows


# -- traces and traffic -------------------------------------------------------

def emit_action_trace(
    config: ScenarioConfig, checkpoint: PathLike, out: PathLike, episode: int = 0
) -> Path:
    """Greedy action indices of both agents over one evaluation episode."""
    policy = load_learned_policy(config, checkpoint)
    env = MCGEnvironment(config, policy.catalog)
    result = run_episode(env, policy, EVAL_EPISODE_OFFSET + episode, config.seed, epsilon=0.0)
    rows = [
        {
            "subframe": sf.subframe_index,
            "ctu_index": sf.action[0],
            "start_index": sf.action[1],
            "ctu_action": " ".join(str(v) for v in policy.catalog.ctu_actions[sf.action[0]]),
            "start_action": " ".join(str(v) for v in policy.catalog.start_actions[sf.action[1]]),
            "n_suc": sf.observation.n_suc,
        }
        for sf in result.subframes
    ]
    path = _write_csv(pd.DataFrame(rows, columns=TRACE_COLUMNS), _out_dir(out) / "action_trace.csv")
    console.ok(f"action trace written to {path}")
    return path


def traffic_profile(config: ScenarioConfig, out: PathLike) -> Dict[str, object]:
    """Expected and sampled new activations per subframe (episode 0 of config.seed)."""
    profile = config.traffic_profile()
    expected = expected_arrivals_per_subframe(profile)
    activations = episode_activations(profile, config.seed, 0)
    empirical = arrival_histogram(activations, profile.duration_ms)
    table = pd.DataFrame({
        "subframe": np.arange(1, len(expected) + 1),
        "expected": expected,
        "empirical": empirical,
    })
    path = _write_csv(table, _out_dir(out) / "traffic.csv")
    return {
        "path": str(path),
        "alpha": profile.alpha,
        "beta": profile.beta,
        "n_ue": profile.n_ue,
        "mean_ms": profile.mean_ms,
        "mode_ms": profile.mode_ms if profile.alpha > 1 and profile.beta > 1 else None,
        "expected_peak_subframe": int(np.argmax(expected)) + 1,
        "empirical_peak_subframe": int(np.argmax(empirical)) + 1,
    }
