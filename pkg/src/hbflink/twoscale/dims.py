"""System dimensions shared by the long- and short-term models."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from ..errors import ConfigError


@dataclass(frozen=True)
class SystemDims:
    n_t: int
    n_r: int
    n_t_rf: int
    n_r_rf: int
    n_s: int
    mod_order: int = 4
    pilot_len: int = 8
    pilot_len_eq: int | None = None  # defaults to n_t_rf
    bits: int = 64
    bits_eq: int = 16
    slots: int = 10  # T_s
    frames: int = 10  # T_f
    window: int = 3  # D
    q_rf: int = 0  # phase-shifter bits, 0 = unquantized

    def __post_init__(self):
        if self.pilot_len_eq is None:
            object.__setattr__(self, "pilot_len_eq", self.n_t_rf)
        if not (1 <= self.n_s <= self.n_r_rf <= self.n_r and self.n_s <= self.n_t_rf <= self.n_t):
            raise ConfigError(f"need N_s <= N_RF <= N on both sides, got {self}")
        if self.mod_order not in (4, 16, 64):
            raise ConfigError(f"unsupported modulation order {self.mod_order}")
        if not 1 <= self.bits_eq < self.bits:
            raise ConfigError(f"need 1 <= B_eq < B, got B_eq={self.bits_eq}, B={self.bits}")
        for name in ("pilot_len", "pilot_len_eq", "slots", "frames", "window"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.q_rf < 0:
            raise ConfigError("q_rf must be >= 0")

    @property
    def bits_per_symbol(self) -> int:
        return {4: 2, 16: 4, 64: 6}[self.mod_order]

    def with_(self, **kw) -> "SystemDims":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def tiny(cls, **kw) -> "SystemDims":
        base = dict(n_t=8, n_r=4, n_t_rf=2, n_r_rf=2, n_s=2, mod_order=4, pilot_len=8, bits=24, bits_eq=8)
        return cls(**{**base, **kw})

    @classmethod
    def desk(cls, **kw) -> "SystemDims":
        base = dict(n_t=16, n_r=8, n_t_rf=4, n_r_rf=2, n_s=2, pilot_len=12, bits=32, bits_eq=8)
        return cls(**{**base, **kw})

    @classmethod
    def paper(cls, **kw) -> "SystemDims":
        base = dict(n_t=64, n_r=32, n_t_rf=8, n_r_rf=4, n_s=4, pilot_len=28, bits=64, bits_eq=16)
        return cls(**{**base, **kw})
