"""
mcgsim command line.

Every command prints one JSON result to stdout with schema {ok, data, error, metrics, version}
and exits 0 when ok, 1 on configuration or feasibility errors, 2 on runtime or numerical errors.
enumerate-actions is the exception: it streams one JSON object per action. Progress lines go
to stderr.
"""
import json
import time
from pathlib import Path
from typing import Callable, List, Optional

import typer

from mcgsim import VERSION, console, harness
from mcgsim.config import ScenarioConfig
from mcgsim.errors import ConfigError, exit_code_for

app = typer.Typer(add_completion=False, help="MCG grant-free NOMA uplink simulator and CMA-DDQN trainer.")

ConfigOpt = typer.Option(None, "--config", help="Scenario file (key=value lines)")
SeedOpt = typer.Option(None, "--seed", help="Master seed (overrides the config)")
OutOpt = typer.Option(Path("runs/latest"), "--out", help="Run directory")
EpisodesOpt = typer.Option(None, "--episodes", help="Episode count (see the command help)")
QuietOpt = typer.Option(False, "--quiet", help="No progress output on stderr")
CheckpointOpt = typer.Option(None, "--checkpoint", help="Bundle directory written by train")
WorkersOpt = typer.Option(None, "--workers", help="Threads for evaluation episodes")


def _parse_ints(text: str, what: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"{what}: expected comma-separated integers, got {text!r}") from e


def _parse_int(text: str, flag: str) -> int:
    try:
        return int(text)
    except ValueError as e:
        raise ConfigError(f"{flag}: expected an integer, got {text!r}") from e


# integer overrides arrive as raw flag text so that bad values surface as ConfigError
_INT_FLAGS = {"seed": "--seed", "workers": "--workers", "episodes": "--episodes",
              "eval_episodes": "--episodes"}


def load_config(config: Optional[Path], seed: Optional[str] = None,
                workers: Optional[str] = None, **overrides) -> ScenarioConfig:
    cfg = ScenarioConfig.from_env(config)
    overrides.update(seed=seed, workers=workers)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    for key, flag in _INT_FLAGS.items():
        if isinstance(overrides.get(key), str):
            overrides[key] = _parse_int(overrides[key], flag)
    return cfg.replace(**overrides) if overrides else cfg


def envelope(action: Callable[[], dict]) -> dict:
    """Run action and wrap its data (or its failure) in the result envelope."""
    start_time = time.time()
    try:
        data = action()
        return {
            "ok": True,
            "data": data,
            "error": None,
            "metrics": {"elapsed_ms": int((time.time() - start_time) * 1000)},
            "version": VERSION,
        }
    except Exception as e:
        return {
            "ok": False,
            "data": None,
            "error": {"type": type(e).__name__, "message": str(e), "exit_code": exit_code_for(e)},
            "metrics": {"elapsed_ms": int((time.time() - start_time) * 1000)},
            "version": VERSION,
        }


def _emit(result: dict):
    typer.echo(json.dumps(result, indent=2, sort_keys=True))
    if not result["ok"]:
        console.fail(f"{result['error']['type']}: {result['error']['message']}")
        raise typer.Exit(result["error"]["exit_code"])


@app.command()
def simulate(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[str] = SeedOpt,
    out: Path = OutOpt,
    policy: str = typer.Option("scg-baseline", "--policy",
                               help="scg-baseline, random-mcg or fixed-mcg"),
    episodes: Optional[str] = EpisodesOpt,
    workers: Optional[str] = WorkersOpt,
    quiet: bool = QuietOpt,
):
    """Run a baseline policy; --episodes sets the number of evaluation episodes."""
    console.set_quiet(quiet)

    def action():
        if policy == "learned":
            raise ConfigError("simulate runs baselines only; use train or evaluate for the learned policy")
        cfg = load_config(config, seed, workers, policy=policy, eval_episodes=episodes)
        path = harness.run_scenario(cfg, out)
        return {"metrics": str(path), "summary": json.loads((out / "summary.json").read_text())}

    _emit(envelope(action))


@app.command()
def train(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[str] = SeedOpt,
    out: Path = OutOpt,
    episodes: Optional[str] = EpisodesOpt,
    workers: Optional[str] = WorkersOpt,
    quiet: bool = QuietOpt,
):
    """Train the CMA-DDQN agents (--episodes training episodes), then evaluate them greedily."""
    console.set_quiet(quiet)

    def action():
        cfg = load_config(config, seed, workers, policy="learned", episodes=episodes)
        path = harness.run_scenario(cfg, out)
        return {
            "metrics": str(path),
            "training": str(out / "training.csv"),
            "checkpoint": str(out / "checkpoint"),
            "summary": json.loads((out / "summary.json").read_text()),
        }

    _emit(envelope(action))


@app.command()
def evaluate(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[str] = SeedOpt,
    out: Path = OutOpt,
    checkpoint: Optional[Path] = CheckpointOpt,
    episodes: Optional[str] = EpisodesOpt,
    workers: Optional[str] = WorkersOpt,
    quiet: bool = QuietOpt,
):
    """Evaluate a trained checkpoint greedily over --episodes evaluation episodes."""
    console.set_quiet(quiet)

    def action():
        cfg = load_config(config, seed, workers, policy="learned", eval_episodes=episodes)
        path = harness.run_scenario(cfg, out, checkpoint=checkpoint or out / "checkpoint")
        return {"metrics": str(path), "summary": json.loads((out / "summary.json").read_text())}

    _emit(envelope(action))


@app.command()
def compare(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[str] = SeedOpt,
    out: Path = OutOpt,
    policies: str = typer.Option("learned,scg-baseline", "--policies",
                                 help="Comma-separated policy names"),
    checkpoint: Optional[Path] = CheckpointOpt,
    episodes: Optional[str] = EpisodesOpt,
    workers: Optional[str] = WorkersOpt,
    quiet: bool = QuietOpt,
):
    """Evaluate several policies on common seeds; --episodes sets learned training episodes."""
    console.set_quiet(quiet)

    def action():
        cfg = load_config(config, seed, workers, episodes=episodes)
        names = [p.strip() for p in policies.split(",") if p.strip()]
        comparison = harness.compare_policies(cfg, names, out, checkpoint)
        return {"comparison": str(out / "comparison.csv"), "reference": comparison["reference"],
                "ratios": comparison["ratios"]}

    _emit(envelope(action))


@app.command("sweep-ncg")
def sweep_ncg(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[str] = SeedOpt,
    out: Path = OutOpt,
    n_cg: str = typer.Option("1,2,3,4,5", "--n-cg", help="Comma-separated grant counts"),
    episodes: Optional[str] = EpisodesOpt,
    workers: Optional[str] = WorkersOpt,
    quiet: bool = QuietOpt,
):
    """Train and evaluate one policy per grant count; --episodes sets training episodes."""
    console.set_quiet(quiet)

    def action():
        cfg = load_config(config, seed, workers, episodes=episodes)
        rows = harness.sweep_ncg(cfg, _parse_ints(n_cg, "--n-cg"), out)
        return {"sweep": str(out / "sweep.csv"), "rows": rows}

    _emit(envelope(action))


@app.command("enumerate-actions")
def enumerate_actions(
    config: Optional[Path] = ConfigOpt,
    quiet: bool = QuietOpt,
):
    """Print both action catalogs, one JSON object per line."""
    console.set_quiet(quiet)
    lines: List[str] = []

    def action():
        catalog = load_config(config).catalog()
        lines.extend(json.dumps(record) for record in catalog.iter_records())
        return {"ctu_actions": catalog.sizes[0], "start_actions": catalog.sizes[1]}

    result = envelope(action)
    if not result["ok"]:
        _emit(result)
    for line in lines:
        typer.echo(line)
    console.ok(f"{result['data']['ctu_actions']} CTU actions, {result['data']['start_actions']} start actions")


@app.command("emit-action-trace")
def emit_action_trace(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[str] = SeedOpt,
    out: Path = OutOpt,
    checkpoint: Optional[Path] = CheckpointOpt,
    quiet: bool = QuietOpt,
):
    """Greedy action indices of both agents over one evaluation episode."""
    console.set_quiet(quiet)

    def action():
        cfg = load_config(config, seed)
        path = harness.emit_action_trace(cfg, checkpoint or out / "checkpoint", out)
        return {"trace": str(path)}

    _emit(envelope(action))


@app.command("traffic-profile")
def traffic_profile(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[str] = SeedOpt,
    out: Path = OutOpt,
    quiet: bool = QuietOpt,
):
    """Expected and sampled new activations per subframe."""
    console.set_quiet(quiet)
    _emit(envelope(lambda: harness.traffic_profile(load_config(config, seed), out)))


def main():
    app()


if __name__ == "__main__":
    main()
