"""Versioned checkpoint bundles: policy, critics, conditioning, environment
and cost parameters, and run provenance, in a single .npz file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agent import ConditioningMode, CriticPair, PolicyParams
from .env import EnvParams
from .nn import MLPSpec
from .noise_cost import CostParams

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint missing, malformed, or of an incompatible version."""


@dataclass
class CheckpointBundle:
    mode: str                      # training mode (cncp / conc / rc / oracle_*)
    conditioning: ConditioningMode
    policy: PolicyParams
    critics: CriticPair
    env_params: EnvParams
    cost_params: CostParams
    levels: np.ndarray
    budgets: np.ndarray
    seed: int
    fixed_eps: float = None
    beta: float = None
    config_hash: str = ""
    version_string: str = ""

    @property
    def conditioned(self) -> bool:
        return self.conditioning.kind != "unconditioned"


def _spec_meta(spec: MLPSpec) -> dict:
    return {
        "input_dim": spec.input_dim,
        "hidden_dims": list(spec.hidden_dims),
        "output_dim": spec.output_dim,
        "activation": spec.activation,
    }


def _spec_from_meta(meta: dict) -> MLPSpec:
    return MLPSpec(
        input_dim=int(meta["input_dim"]),
        hidden_dims=tuple(meta["hidden_dims"]),
        output_dim=int(meta["output_dim"]),
        activation=meta["activation"],
    )


def save_checkpoint(path, bundle: CheckpointBundle):
    meta = {
        "version": CHECKPOINT_VERSION,
        "mode": bundle.mode,
        "conditioning": {"kind": bundle.conditioning.kind,
                         "rc_repeat": bundle.conditioning.rc_repeat},
        "policy_spec": _spec_meta(bundle.policy.spec),
        "critics_decomposed": bundle.critics.decomposed,
        "env_params": dataclasses.asdict(bundle.env_params),
        "cost_params": dataclasses.asdict(bundle.cost_params),
        "seed": bundle.seed,
        "fixed_eps": bundle.fixed_eps,
        "beta": bundle.beta,
        "config_hash": bundle.config_hash,
        "version_string": bundle.version_string,
    }
    if bundle.critics.decomposed:
        meta["xi_spec"] = _spec_meta(bundle.critics.xi_spec)
        meta["w_spec"] = _spec_meta(bundle.critics.w_spec)
    else:
        meta["v_spec"] = _spec_meta(bundle.critics.v_spec)
    arrays = {
        "mean_params": bundle.policy.mean_params,
        "log_std": bundle.policy.log_std,
        "levels": np.asarray(bundle.levels, dtype=np.float64),
        "budgets": np.asarray(bundle.budgets, dtype=np.float64),
    }
    arrays.update({f"critic_{k}": v for k, v in bundle.critics.arrays().items()})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path) -> CheckpointBundle:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    with data:
        try:
            meta = json.loads(str(data["meta"]))
        except (KeyError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"checkpoint {path} has no valid metadata") from exc
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {meta.get('version')} != supported {CHECKPOINT_VERSION}"
            )
        conditioning = ConditioningMode(
            meta["conditioning"]["kind"], meta["conditioning"]["rc_repeat"]
        )
        policy = PolicyParams(
            spec=_spec_from_meta(meta["policy_spec"]),
            mean_params=data["mean_params"].copy(),
            log_std=data["log_std"].copy(),
        )
        if meta["critics_decomposed"]:
            critics = CriticPair(
                decomposed=True,
                xi_spec=_spec_from_meta(meta["xi_spec"]),
                w_spec=_spec_from_meta(meta["w_spec"]),
                xi_r=data["critic_xi_r"].copy(),
                xi_c=data["critic_xi_c"].copy(),
                w_r=data["critic_w_r"].copy(),
                w_c=data["critic_w_c"].copy(),
            )
        else:
            critics = CriticPair(
                decomposed=False,
                v_spec=_spec_from_meta(meta["v_spec"]),
                v_r=data["critic_v_r"].copy(),
                v_c=data["critic_v_c"].copy(),
            )
        env_kwargs = dict(meta["env_params"])
        env_kwargs["v_target_range"] = tuple(env_kwargs["v_target_range"])
        return CheckpointBundle(
            mode=meta["mode"],
            conditioning=conditioning,
            policy=policy,
            critics=critics,
            env_params=EnvParams(**env_kwargs),
            cost_params=CostParams(**meta["cost_params"]),
            levels=data["levels"].copy(),
            budgets=data["budgets"].copy(),
            seed=int(meta["seed"]),
            fixed_eps=meta["fixed_eps"],
            beta=meta["beta"],
            config_hash=meta.get("config_hash", ""),
            version_string=meta.get("version_string", ""),
        )


def bundle_from_trainer(trainer, config_hash: str = "", version_string: str = "") -> CheckpointBundle:
    return CheckpointBundle(
        mode=trainer.mode,
        conditioning=trainer.conditioning,
        policy=trainer.policy,
        critics=trainer.critics,
        env_params=trainer.env_params,
        cost_params=trainer.cost_params,
        levels=trainer.levels,
        budgets=trainer.budgets,
        seed=trainer.cfg.seed,
        fixed_eps=trainer.fixed_eps,
        beta=trainer.beta,
        config_hash=config_hash,
        version_string=version_string,
    )


def file_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]
