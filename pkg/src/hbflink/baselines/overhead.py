"""Feedback bits per superframe for the four signaling schemes."""

from __future__ import annotations

from ..errors import DomainError

SCHEMES = ("conv-single", "conv-two", "dnn-single", "dnn-two")


def signaling_overhead(scheme: str, t_f: int, t_s: int, *, b_c: int = 0, n_r: int = 0, n_t: int = 0,
                       n_r_rf: int = 0, n_t_rf: int = 0, b: int = 0, b_t: int = 0) -> int:
    """Exact integer bit count.

    conv-single: ``T_f T_s B_c N_r N_t``
    conv-two:    ``T_f B_c ((T_s - 1) N_r^RF N_t^RF + N_r N_t)``
    dnn-single:  ``T_f T_s B``
    dnn-two:     ``T_f ((T_s - 1) B_t + B)``
    """
    need = {
        "conv-single": dict(b_c=b_c, n_r=n_r, n_t=n_t),
        "conv-two": dict(b_c=b_c, n_r=n_r, n_t=n_t, n_r_rf=n_r_rf, n_t_rf=n_t_rf),
        "dnn-single": dict(b=b),
        "dnn-two": dict(b=b, b_t=b_t),
    }
    if scheme not in need:
        raise DomainError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    for k, v in {"t_f": t_f, "t_s": t_s, **need[scheme]}.items():
        if int(v) != v or v < 1:
            raise DomainError(f"{k} must be a positive integer, got {v}")
    t_f, t_s = int(t_f), int(t_s)
    if scheme == "conv-single":
        return t_f * t_s * b_c * n_r * n_t
    if scheme == "conv-two":
        return t_f * b_c * ((t_s - 1) * n_r_rf * n_t_rf + n_r * n_t)
    if scheme == "dnn-single":
        return t_f * t_s * b
    return t_f * ((t_s - 1) * b_t + b)
