"""
cdeh/schemas/policy.py
Evaluation policies: which parts of the action come from the learners
and which are replaced by a fixed rule
"""

from __future__ import annotations

from typing import Dict, Literal

from pydantic import BaseModel, ConfigDict

from cdeh.models.channel import ChannelMask
from cdeh.utils.exceptions import ConfigError

OrderPolicy = Literal["learned", "reverse", "sequential", "fixed", "random", "exhaustive"]
PhasePolicy = Literal["learned", "random", "fixed", "only_irs", "direct"]
OffloadPolicy = Literal["learned", "full_local", "full_offload"]
AccessScheme = Literal["proposed_rsma", "sic_rsma", "noma"]
ActionSource = Literal["actor", "random", "dqn_only"]


class PolicySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    order_policy: OrderPolicy = "learned"
    phase_policy: PhasePolicy = "learned"
    offload_policy: OffloadPolicy = "learned"
    access_scheme: AccessScheme = "proposed_rsma"
    # where the continuous bundle comes from before substitutions
    action_source: ActionSource = "actor"

    @property
    def needs_checkpoint(self) -> bool:
        return self.action_source != "random" or self.order_policy == "learned"

    @property
    def mask(self) -> ChannelMask:
        if self.phase_policy == "only_irs":
            return ChannelMask.ONLY_IRS
        if self.phase_policy == "direct":
            return ChannelMask.DIRECT
        return ChannelMask.NONE


# =============================================================================
# PRESETS (names accepted by POLICIES / --policies)
# =============================================================================

def _preset(name: str, **fields) -> PolicySpec:
    return PolicySpec(name=name, **fields)


PRESETS: Dict[str, PolicySpec] = {
    spec.name: spec
    for spec in (
        _preset("cdeh"),
        _preset("reverse_decode", order_policy="reverse"),
        _preset("order_decode", order_policy="sequential"),
        _preset("fixed_decode", order_policy="fixed"),
        _preset("random_decode", order_policy="random"),
        _preset("exhaustive_decode", order_policy="exhaustive"),
        _preset("random_phase", phase_policy="random"),
        _preset("fixed_phase", phase_policy="fixed"),
        _preset("only_irs", phase_policy="only_irs"),
        _preset("direct", phase_policy="direct"),
        _preset("full_local", offload_policy="full_local", order_policy="sequential", phase_policy="fixed",
                action_source="random"),
        _preset("full_offload", offload_policy="full_offload"),
        _preset("noma", access_scheme="noma"),
        _preset("sic_rsma", access_scheme="sic_rsma"),
        _preset("random", order_policy="random", action_source="random"),
        _preset("dqn_only", action_source="dqn_only"),
    )
}


def resolve_policy(name: str) -> PolicySpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}; choose from {sorted(PRESETS)}") from None
