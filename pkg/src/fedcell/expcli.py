"""Experiment driver: config files, seeding, CSV metrics and the CLI.

Config files are flat INI ("key = value" under section headers); every key
has a built-in default, unknown keys are rejected by name. All randomness
derives from the --seed argument through named SeedSequence spawns, so a
(config, seed) pair reproduces every CSV byte for byte.

CSV schemas (version 1; one file per command, columns in order):

* meta_reward.csv:   epoch, reward_task<k>_ues<I> ..., reward_total
* adapt_metrics.csv: episode, reward, entropy_channel, entropy_power,
                     mean_sum_ee, collision_rate, mean_power_w, averaged,
                     eta_<i> ...
* eval_ee.csv:       variant, n_ues, distribution, mean_sum_ee,
                     collision_rate, oracle_sum_ee, oracle_gap
* oracle.csv:        distribution, sum_ee, assignment, powers_dbm
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import baselines, channel, fed, meta, net, ppo
from .env import Action, UplinkEnv, power_from_raw


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration sections


@dataclass
class ScenarioSection:
    preset: str = "urban_micro"
    n_subchannels: int = 10
    bandwidths_mhz: list = field(default_factory=lambda: list(channel.DEFAULT_BANDWIDTH_SET_MHZ))
    carrier_freq_ghz: float = 6.0
    area_side_m: float = -1.0          # <= 0 means "use the preset value"
    bs_height_m: float = -1.0
    ue_height_m: float = 1.5
    shadowing_sigma_db: float = 7.8
    shadowing_per_subchannel: bool = True
    noise_psd_dbm_hz: float = 0.0      # 0 means "use the preset value"
    p_min_dbm: float = 0.0
    p_max_dbm: float = 24.0
    gamma_min_db: float = 5.0
    bs_antenna_gain_db: float = 8.0
    ue_antenna_gain_db: float = 3.0
    bs_noise_figure_db: float = 5.0
    ue_noise_figure_db: float = 9.0

    def build(self) -> channel.ScenarioConfig:
        n = self.n_subchannels
        bw = self.bandwidths_mhz
        if len(bw) != n:
            if len(bw) == len(channel.DEFAULT_BANDWIDTH_SET_MHZ):
                bw = bw[:n]
            else:
                raise ConfigError("scenario.bandwidths_mhz length must match n_subchannels")
        overrides = dict(
            n_subchannels=n,
            subchannel_bandwidth_hz=np.asarray(bw) * 1e6,
            carrier_freq_ghz=np.full(n, self.carrier_freq_ghz),
            ue_height_m=self.ue_height_m,
            shadowing_sigma_db=self.shadowing_sigma_db,
            shadowing_per_subchannel=self.shadowing_per_subchannel,
            p_min_dbm=self.p_min_dbm,
            p_max_dbm=self.p_max_dbm,
            gamma_min_db=self.gamma_min_db,
            bs_antenna_gain_db=self.bs_antenna_gain_db,
            ue_antenna_gain_db=self.ue_antenna_gain_db,
            bs_noise_figure_db=self.bs_noise_figure_db,
            ue_noise_figure_db=self.ue_noise_figure_db,
        )
        if self.area_side_m > 0:
            overrides["area_side_m"] = self.area_side_m
        if self.bs_height_m > 0:
            overrides["bs_height_m"] = self.bs_height_m
        if self.noise_psd_dbm_hz != 0.0:
            overrides["noise_psd_dbm_hz"] = self.noise_psd_dbm_hz
        return channel.scenario_preset(self.preset, **overrides)


@dataclass
class EnvSection:
    n_ues: int = 6
    episode_len: int = 100
    reward_coeff: float = 1e-7
    ue_speed_max: float = 1.0


@dataclass
class NetSection:
    hidden1: int = 512
    hidden2: int = 256
    critic_hidden: int = 128
    log_sigma_init: float = -0.7


@dataclass
class PpoSection:
    discount: float = 0.9
    gae_lambda: float = 0.98
    clip_epsilon: float = 0.2
    value_coeff: float = 0.5
    entropy_coeff: float = 0.01
    epochs_per_update: int = 4
    minibatch_size: int = 256
    normalize_advantage: bool = True

    def build(self) -> ppo.PpoConfig:
        return ppo.PpoConfig(
            discount=self.discount, gae_lambda=self.gae_lambda,
            clip_epsilon=self.clip_epsilon, value_coeff=self.value_coeff,
            entropy_coeff=self.entropy_coeff, epochs_per_update=self.epochs_per_update,
            minibatch_size=self.minibatch_size, normalize_advantage=self.normalize_advantage,
        )


@dataclass
class MetaSection:
    tasks: list = field(default_factory=lambda: [2, 4, 8])
    epochs: int = 150
    learning_rate: float = 5e-7
    batch_size: int = 256


@dataclass
class FedSection:
    weighting: str = "success"
    averaging_period: int = 100
    episodes: int = 1000
    learning_rate: float = 1e-6
    checkpoint_episodes: list = field(default_factory=lambda: [500])

    def build(self) -> fed.FedConfig:
        return fed.FedConfig(
            averaging_period_episodes=self.averaging_period,
            weighting=self.weighting,
            adaptation_lr=self.learning_rate,
            n_adapt_episodes=self.episodes,
            checkpoint_episodes=tuple(self.checkpoint_episodes),
        )


@dataclass
class EvalSection:
    n_distributions: int = 100
    n_steps: int = 100
    n_ues_sweep: list = field(default_factory=list)  # empty -> just env.n_ues
    stochastic: bool = False


@dataclass
class ExperimentConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    env: EnvSection = field(default_factory=EnvSection)
    net: NetSection = field(default_factory=NetSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    meta: MetaSection = field(default_factory=MetaSection)
    fed: FedSection = field(default_factory=FedSection)
    eval: EvalSection = field(default_factory=EvalSection)


_SECTIONS = {
    "scenario": ScenarioSection,
    "env": EnvSection,
    "net": NetSection,
    "ppo": PpoSection,
    "meta": MetaSection,
    "fed": FedSection,
    "eval": EvalSection,
}


def _coerce(raw: str, default):
    """Parse an INI string into the type of the default value."""
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, list):
        if not raw:
            return []
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if default and isinstance(default[0], int):
            return [int(float(x)) for x in items]
        if default and isinstance(default[0], float):
            return [float(x) for x in items]
        out = []
        for x in items:
            v = float(x)
            out.append(int(v) if v.is_integer() else v)
        return out
    return raw


def load_config(path: str | None) -> ExperimentConfig:
    """Read an INI file into an ExperimentConfig; unknown keys are errors."""
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        target = getattr(cfg, section)
        known = {f.name for f in dc_fields(target)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown config key: {section}.{key}")
            default = getattr(target, key)
            try:
                setattr(target, key, _coerce(raw, default))
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc
    return cfg


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# commands


def _meta_tasks(cfg: ExperimentConfig) -> list[meta.TaskSpec]:
    scenario = cfg.scenario.build()
    return [meta.TaskSpec(n_ues=int(i), scenario=scenario, seed=k)
            for k, i in enumerate(cfg.meta.tasks)]


def cmd_meta_train(cfg: ExperimentConfig, seed: int, out_dir: Path) -> Path:
    """Meta-train the shared initialization; writes model, CSV and plot."""
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = _meta_tasks(cfg)
    params, history = meta.meta_train(
        tasks, n_epochs=cfg.meta.epochs, meta_lr=cfg.meta.learning_rate,
        ppo_cfg=cfg.ppo.build(), seed=seed,
        hidden1=cfg.net.hidden1, hidden2=cfg.net.hidden2,
        critic_hidden=cfg.net.critic_hidden, batch_size=cfg.meta.batch_size,
        episode_len=cfg.env.episode_len, reward_coeff=cfg.env.reward_coeff,
        log_sigma_init=cfg.net.log_sigma_init,
    )
    model_path = out_dir / "meta_model.bin"
    net.save_params(params, model_path)
    header = ["epoch"] + [f"reward_task{k}_ues{t.n_ues}" for k, t in enumerate(tasks)]
    header.append("reward_total")
    rows = [[h.epoch, *h.task_rewards, h.reward_total] for h in history]
    csv_path = out_dir / "meta_reward.csv"
    write_csv(csv_path, header, rows)
    from . import plots
    plots.plot_meta_reward(csv_path, out_dir / "meta_reward.png")
    return model_path


def cmd_adapt(cfg: ExperimentConfig, seed: int, out_dir: Path, variant: str,
              meta_model: Path | None = None) -> fed.AdaptResult:
    """Run one benchmark variant's adaptation; writes metrics and checkpoints."""
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = cfg.scenario.build()
    task = meta.TaskSpec(n_ues=cfg.env.n_ues, scenario=scenario, seed=0)
    meta_params = net.load_params(meta_model) if meta_model else None
    result = baselines.run_variant(
        variant, task, cfg.fed.build(), cfg.ppo.build(), seed=seed,
        meta_params=meta_params, reward_coeff=cfg.env.reward_coeff,
        episode_len=cfg.env.episode_len, hidden1=cfg.net.hidden1,
        hidden2=cfg.net.hidden2, critic_hidden=cfg.net.critic_hidden,
        log_sigma_init=cfg.net.log_sigma_init,
    )
    n = task.n_ues
    header = ["episode", "reward", "entropy_channel", "entropy_power", "mean_sum_ee",
              "collision_rate", "mean_power_w", "actor_term", "critic_term",
              "clip_fraction", "averaged"] + [f"eta_{i}" for i in range(n)]
    rows = [[m.episode, m.reward, m.entropy_channel, m.entropy_power, m.mean_sum_ee,
             m.collision_rate, m.mean_power_w, m.actor_term, m.critic_term,
             m.clip_fraction, m.averaged, *m.eta] for m in result.metrics]
    csv_path = out_dir / "adapt_metrics.csv"
    write_csv(csv_path, header, rows)
    for episode, models in result.checkpoints.items():
        for i, m in enumerate(models):
            net.save_params(m, out_dir / f"model_ue{i}_ep{episode}.bin")
    for i, m in enumerate(result.models):
        net.save_params(m, out_dir / f"model_ue{i}_final.bin")
    from . import plots
    plots.plot_adapt_metrics(csv_path, out_dir / "adapt_reward.png")
    return result


def _adapt_job(job):
    """Worker for the seed-parallel fan-out; writes its own files and
    returns one small summary row."""
    cfg, seed, out_dir, variant, meta_model = job
    result = cmd_adapt(cfg, seed, Path(out_dir), variant,
                       Path(meta_model) if meta_model else None)
    tail = min(50, len(result.metrics))
    rewards = [m.reward for m in result.metrics[-tail:]]
    collisions = [m.collision_rate for m in result.metrics[-tail:]]
    return [seed, float(np.mean(rewards)), float(np.mean(collisions))]


def cmd_adapt_multi(cfg: ExperimentConfig, seeds: list[int], out_dir: Path,
                    variant: str, meta_model: Path | None = None,
                    max_workers: int | None = None) -> Path:
    """Fan one variant out over several seeds with a bounded worker pool.

    Each worker owns its environment and models and writes
    ``out_dir/seed<k>/``; the parent is the single writer of the merged
    ``summary.csv`` (rows in seed order, independent of completion order).
    """
    from concurrent.futures import ProcessPoolExecutor

    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, s, str(out_dir / f"seed{s}"), variant,
             str(meta_model) if meta_model else None) for s in seeds]
    workers = max_workers or min(4, len(jobs))
    if workers <= 1:
        rows = [_adapt_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_adapt_job, jobs))
    rows.sort(key=lambda r: r[0])
    summary = out_dir / "summary.csv"
    write_csv(summary, ["seed", "reward_final50", "collision_rate_final50"], rows)
    return summary


def evaluate_models(models: list[net.PolicyParams], scenario: channel.ScenarioConfig,
                    n_ues: int, n_distributions: int, n_steps: int, seed: int,
                    episode_len: int = 100, stochastic: bool = False,
                    with_oracle: bool = True):
    """Frozen-policy evaluation over random UE placements.

    Policies act deterministically by default (argmax channel, mean power).
    Returns one row per placement: mean sum EE, collision rate, the exact
    assignment-oracle optimum averaged over the same gain snapshots, and the
    relative gap to it.
    """
    rows = []
    for d in range(n_distributions):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE7A1, d)))
        env = UplinkEnv(scenario, n_ues, episode_len=episode_len)
        obs = env.reset(rng)
        ee_acc = 0.0
        oracle_acc = 0.0
        collisions = 0
        for _ in range(n_steps):
            if with_oracle:
                oracle_acc += baselines.oracle_sum_ee(env.state.gain_lin, scenario)
            actions = []
            for i in range(n_ues):
                logits, mu, log_sigma, _ = net.forward(models[i % len(models)], obs[i])
                if stochastic:
                    c, raw, *_ = net.sample_action(logits, mu, log_sigma, rng)
                else:
                    c, raw = int(np.argmax(logits)), mu
                actions.append(Action(channel=c, power_raw=float(raw),
                                      power_w=power_from_raw(raw, scenario)))
            _, obs, stats = env.joint_step(actions)
            ee_acc += float(stats.ee_per_ue.sum())
            collisions += int(stats.collision)
        mean_ee = ee_acc / n_steps
        mean_oracle = oracle_acc / n_steps if with_oracle else float("nan")
        gap = (mean_oracle - mean_ee) / mean_oracle if with_oracle and mean_oracle > 0 else float("nan")
        rows.append(dict(distribution=d, mean_sum_ee=mean_ee,
                         collision_rate=collisions / n_steps,
                         oracle_sum_ee=mean_oracle, oracle_gap=gap))
    return rows


def _load_model_set(path: Path) -> list[net.PolicyParams]:
    """A model file, or a directory of per-UE final checkpoints."""
    if path.is_dir():
        files = sorted(path.glob("model_ue*_final.bin"))
        if not files:
            raise FileNotFoundError(f"no model_ue*_final.bin files in {path}")
        return [net.load_params(f) for f in files]
    return [net.load_params(path)]


def cmd_evaluate(cfg: ExperimentConfig, seed: int, out_dir: Path,
                 model_specs: list[tuple[str, Path]]) -> Path:
    """Evaluate named model sets; writes eval_ee.csv and a bar plot."""
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = cfg.scenario.build()
    sweep = [int(x) for x in cfg.eval.n_ues_sweep] or [cfg.env.n_ues]
    rows = []
    for label, path in model_specs:
        models = _load_model_set(path)
        for n_ues in sweep:
            res = evaluate_models(models, scenario, n_ues,
                                  cfg.eval.n_distributions, cfg.eval.n_steps,
                                  seed=seed, episode_len=cfg.env.episode_len,
                                  stochastic=cfg.eval.stochastic)
            for r in res:
                rows.append([label, n_ues, r["distribution"], r["mean_sum_ee"],
                             r["collision_rate"], r["oracle_sum_ee"], r["oracle_gap"]])
    csv_path = out_dir / "eval_ee.csv"
    write_csv(csv_path, ["variant", "n_ues", "distribution", "mean_sum_ee",
                         "collision_rate", "oracle_sum_ee", "oracle_gap"], rows)
    from . import plots
    plots.plot_eval_bars(csv_path, out_dir / "eval_ee.png")
    return csv_path


def cmd_oracle(cfg: ExperimentConfig, seed: int, out_dir: Path) -> Path:
    """Assignment-oracle optimum on random placements; writes oracle.csv."""
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = cfg.scenario.build()
    n_ues = cfg.env.n_ues
    rows = []
    for d in range(cfg.eval.n_distributions):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x04AC, d)))
        env = UplinkEnv(scenario, n_ues, episode_len=cfg.env.episode_len)
        env.reset(rng)
        gains = env.state.gain_lin
        ee, power, _ = baselines.best_power_per_cell(gains, scenario)
        assignment, total = baselines.hungarian_assignment(ee)
        p_dbm = [10.0 * np.log10(power[i, a]) + 30.0 for i, a in enumerate(assignment)]
        rows.append([d, total, " ".join(str(a) for a in assignment),
                     " ".join(repr(float(p)) for p in p_dbm)])
    csv_path = out_dir / "oracle.csv"
    write_csv(csv_path, ["distribution", "sum_ee", "assignment", "powers_dbm"], rows)
    return csv_path


# ---------------------------------------------------------------------------
# CLI


def _parse_model_spec(raw: str) -> tuple[str, Path]:
    if "=" in raw:
        label, path = raw.split("=", 1)
    else:
        label, path = Path(raw).stem, raw
    return label, Path(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedcell",
        description="Distributed uplink resource allocation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI config file (defaults built in)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="out", help="output directory")

    p = sub.add_parser("meta-train", help="train the shared initialization across tasks")
    common(p)

    p = sub.add_parser("adapt", help="run one benchmark variant's adaptation")
    common(p)
    p.add_argument("--variant", choices=baselines.VARIANTS, default="MFRL")
    p.add_argument("--meta-model", default=None,
                   help="meta_model.bin path (required for MFRL/MRL/MFRL_EARLY)")
    p.add_argument("--seeds", default=None, metavar="S0,S1,...",
                   help="fan out over several seeds in parallel (overrides --seed)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker pool size for --seeds (default: min(4, n_seeds))")

    p = sub.add_parser("evaluate", help="frozen-policy evaluation of trained models")
    common(p)
    p.add_argument("--models", action="append", required=True, metavar="LABEL=PATH",
                   help="model file or adapt output directory; repeatable")

    p = sub.add_parser("oracle", help="exact optimum on random placements")
    common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = Path(args.out_dir)
        if args.command == "meta-train":
            cmd_meta_train(cfg, args.seed, out_dir)
        elif args.command == "adapt":
            meta_model = Path(args.meta_model) if args.meta_model else None
            if args.seeds:
                seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
                cmd_adapt_multi(cfg, seeds, out_dir, args.variant, meta_model,
                                max_workers=args.workers)
            else:
                cmd_adapt(cfg, args.seed, out_dir, args.variant, meta_model)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.seed, out_dir,
                         [_parse_model_spec(s) for s in args.models])
        elif args.command == "oracle":
            cmd_oracle(cfg, args.seed, out_dir)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
