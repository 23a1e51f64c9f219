"""Continual-learning methods, each a list of protections around one learner."""

from __future__ import annotations

from ..config import ExperimentConfig
from ..data.copytask import TaskSpec
from ..models.rnn import RNNArch
from .base import Learner, LearnerContext, Protection, split_counts
from .baselines import FromScratch
from .coresets import Coresets, coreset_build, distill_loss, distill_targets
from .ewc import EwcState, OnlineEwc, ewc_accumulate_fisher, ewc_penalty
from .hnet import HypernetProtection
from .masking import Masking, MaskSet, mask_generate
from .replay import (
    DecoderSpec,
    GenerativeReplay,
    RtfWeights,
    replay_sample,
    rtf_loss,
    vae_prior_match,
    vae_recon_loss,
)
from .si import SiState, SynapticIntelligence, si_consolidate, si_penalty, si_track_step


def make_arch(config: ExperimentConfig) -> RNNArch:
    copy = config.copy_config()
    return RNNArch(
        kind=config.model.kind,
        n_in=copy.F_in,
        n_h=config.model.n_h,
        n_out=copy.F_out,
        n_tasks=config.experiment.K,
        task_id_input=config.model.task_id_input,
        single_head=config.model.single_head,
        n_latent=config.replay.n_z if config.method.name == "rtf" else 0,
    )


def make_protections(config: ExperimentConfig) -> list[Protection]:
    m = config.method
    name = m.name

    def si() -> SynapticIntelligence:
        return SynapticIntelligence(m.value("lambda_si"), m.value("si_epsilon"), m.value("si_denominator"))

    if name in ("finetune", "multitask"):
        return []
    if name == "from_scratch":
        return [FromScratch()]
    if name == "ewc":
        return [OnlineEwc(m.value("lambda_ewc"))]
    if name == "si":
        return [si()]
    if name == "masking":
        return [Masking(m.value("masked_fraction"))]
    if name == "masking_si":
        return [Masking(m.value("masked_fraction")), si()]
    if name == "coresets":
        return [Coresets(m.value("coreset_size"), m.value("lambda_distill"), pool=config.eval.n_test)]
    if name == "hnet":
        return [HypernetProtection(config.hnet, config.experiment.K, m.value("beta"), m.value("hnet_c"))]
    r = config.replay
    spec = DecoderSpec(r.n_z, r.n_dec, config.experiment.K, config.experiment.F_in)
    weights = RtfWeights(m.value("lambda_distill"), m.value("lambda_rec"), m.value("lambda_pm"))
    return [GenerativeReplay(spec, weights, r.likelihood, r.tau, r.sampling)]


def build_learner(config: ExperimentConfig, specs: list[TaskSpec]) -> Learner:
    context = LearnerContext(
        arch=make_arch(config),
        copy=config.copy_config(),
        specs=specs,
        seed=config.experiment.seed,
        n_fisher=config.eval.n_fisher,
        orth_init=config.optim.orth_init,
    )
    return Learner(config.method.name, context, make_protections(config), joint=config.method.name == "multitask")


__all__ = [
    "Coresets",
    "DecoderSpec",
    "EwcState",
    "FromScratch",
    "GenerativeReplay",
    "HypernetProtection",
    "Learner",
    "LearnerContext",
    "MaskSet",
    "Masking",
    "OnlineEwc",
    "Protection",
    "RtfWeights",
    "SiState",
    "SynapticIntelligence",
    "build_learner",
    "coreset_build",
    "distill_loss",
    "distill_targets",
    "ewc_accumulate_fisher",
    "ewc_penalty",
    "make_arch",
    "make_protections",
    "mask_generate",
    "replay_sample",
    "rtf_loss",
    "si_consolidate",
    "si_penalty",
    "si_track_step",
    "split_counts",
    "vae_prior_match",
    "vae_recon_loss",
]
