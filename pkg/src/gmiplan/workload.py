"""DRL workload descriptors and the benchmark catalog."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Sequence

BYTES_PER_PARAM = 4


class Role(str, Enum):
    SIMULATOR = "Simulator"
    AGENT = "Agent"
    TRAINER = "Trainer"


class ResourceKind(str, Enum):
    SM = "SM"
    MEMORY = "Memory"


@dataclass(frozen=True)
class RoleProfile:
    role: Role
    r_sm: float
    r_mem: float
    t_iter: float

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        for name in ("r_sm", "r_mem"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{self.role.value}.{name} must be in (0, 1], got {value}")
        if not self.t_iter > 0:
            raise ValueError(f"{self.role.value}.t_iter must be positive, got {self.t_iter}")

    def size(self, kind: ResourceKind) -> float:
        return self.r_sm if kind is ResourceKind.SM else self.r_mem


# Simulator : agent : trainer = 10 : 1 : 2 in compute and 6 : 1 : 2 in time.
DEFAULT_PROFILES: Mapping[Role, RoleProfile] = MappingProxyType({
    Role.SIMULATOR: RoleProfile(Role.SIMULATOR, r_sm=1.0, r_mem=0.4, t_iter=6.0),
    Role.AGENT: RoleProfile(Role.AGENT, r_sm=0.1, r_mem=0.05, t_iter=1.0),
    Role.TRAINER: RoleProfile(Role.TRAINER, r_sm=0.2, r_mem=0.1, t_iter=2.0),
})

DEFAULT_ALPHA = 0.2
DEFAULT_BETA = 0.3
DEFAULT_STEPS_PER_TRAIN = 32


@dataclass(frozen=True)
class DrlWorkload:
    name: str
    state_size: float
    action_size: float
    reward_size: float
    model_size: float
    steps_per_train: int = DEFAULT_STEPS_PER_TRAIN
    profiles: Mapping[Role, RoleProfile] = field(default_factory=lambda: DEFAULT_PROFILES)
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    policy_dims: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("state_size", "action_size", "reward_size", "model_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{self.name}: {name} must be positive")
        if self.steps_per_train < 1:
            raise ValueError(f"{self.name}: steps_per_train must be >= 1")
        for name in ("alpha", "beta"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{self.name}: {name} must be in (0, 1]")
        profiles = {Role(k): v for k, v in dict(self.profiles).items()}
        missing = set(Role) - set(profiles)
        if missing:
            raise ValueError(f"{self.name}: missing role profiles {sorted(r.value for r in missing)}")
        object.__setattr__(self, "profiles", MappingProxyType(profiles))
        object.__setattr__(self, "policy_dims", tuple(self.policy_dims))

    @property
    def t_s(self) -> float:
        return self.profiles[Role.SIMULATOR].t_iter

    @property
    def t_a(self) -> float:
        return self.profiles[Role.AGENT].t_iter

    @property
    def t_t(self) -> float:
        return self.profiles[Role.TRAINER].t_iter

    @property
    def experience_size(self) -> float:
        return self.state_size + self.action_size + self.reward_size

    @property
    def param_count(self) -> int:
        return int(self.model_size // BYTES_PER_PARAM)

    def dominant_kind(self, roles: Sequence[Role] = tuple(Role)) -> ResourceKind:
        """Dominant resource of a process running ``roles`` back to back on one GMI."""
        r_sm = max(self.profiles[r].r_sm for r in roles)
        r_mem = max(self.profiles[r].r_mem for r in roles)
        return dominant_resource(r_sm, r_mem)

    def __eq__(self, other):
        if not isinstance(other, DrlWorkload):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def _key(self):
        return (self.name, self.state_size, self.action_size, self.reward_size, self.model_size,
                self.steps_per_train, tuple(sorted(self.profiles.items())), self.alpha, self.beta,
                self.policy_dims)


def dominant_resource(r_sm: float, r_mem: float) -> ResourceKind:
    # ties go to SM
    return ResourceKind.SM if r_sm >= r_mem else ResourceKind.MEMORY


def dense_params(dims: Sequence[int]) -> int:
    """Weights plus biases of a fully connected stack ``dims[0] -> ... -> dims[-1]``."""
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def actor_critic_params(policy_dims: Sequence[int]) -> int:
    """Policy network plus a value network with the same hidden widths and a scalar head."""
    value_dims = list(policy_dims[:-1]) + [1]
    return dense_params(policy_dims) + dense_params(value_dims)


# abbr -> (full name, environment type, policy layer widths)
BENCHMARKS: Mapping[str, tuple[str, str, tuple[int, ...]]] = MappingProxyType({
    "AT": ("Ant", "L", (60, 256, 128, 64, 8)),
    "AY": ("Anymal", "L", (48, 256, 128, 64, 12)),
    "BB": ("BallBalance", "L", (24, 256, 128, 64, 3)),
    "FC": ("FrankaCabinet", "F", (23, 256, 128, 64, 9)),
    "HM": ("Humanoid", "L", (108, 200, 400, 100, 21)),
    "SH": ("ShadowHand", "R", (211, 512, 512, 512, 256, 20)),
})


def load_benchmark(name: str) -> DrlWorkload:
    try:
        _, _, dims = BENCHMARKS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; expected one of {sorted(BENCHMARKS)}") from None
    return DrlWorkload(
        name=name,
        state_size=dims[0] * BYTES_PER_PARAM,
        action_size=dims[-1] * BYTES_PER_PARAM,
        reward_size=BYTES_PER_PARAM,
        model_size=actor_critic_params(dims) * BYTES_PER_PARAM,
        policy_dims=dims,
    )
