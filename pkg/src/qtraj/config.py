"""Declarative system configuration: parsing, serialization and building.

A config is line oriented::

    # one pumped particle orthogonal to a lossy cavity mode
    [free 0] kind=LossyMode deltac=0 kappa=20 cutoff=6
    [free 1] kind=PumpedMovingParticle omrec=0.01 resolution=128
             etaeff=0.5 pump=cos:1
    [interaction] kind=ParticleOrthogonalToCavity subsystems=0,1 u0=-2
    [initial] free0=fock 0 free1=packet 0,40,0.2
    [trajectory] seed=1 eps=1e-6 dplimit=0.01 tend=5 dt_display=0.05 ntraj=1
    [output] dump=1,2.5

Each section header may carry ``key=value`` tokens on the same line and on
the following lines. A token without ``=`` continues the previous value
(``free0=fock 3``). ``#`` starts a comment. A free written as
``[free 2] alias=1`` shares the element instance of free 1 (identical
particles). Keys are checked against the element kind.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import elements as el
from .errors import ConfigError, ConfigSyntaxError
from .mcwf import TrajectoryParams
from .statevec import (
    StateVector,
    coherent_state,
    direct_product,
    fock_state,
    momentum_state,
    wave_packet,
)
from .system import Composite

FREE_KEYS = {
    "LossyMode": ("deltac", "kappa", "cutoff"),
    "PumpedLossyMode": ("deltac", "kappa", "eta", "cutoff"),
    "MovingParticle": ("omrec", "resolution"),
    "PumpedMovingParticle": ("omrec", "resolution", "etaeff", "pump"),
}
FREE_OPTIONAL = {"PumpedLossyMode": {"eta": "0"}}

INTERACTION_KEYS = {
    "ParticleOrthogonalToCavity": (("u0",), ("adjust",)),
    "ParticleAlongCavity": (("u0", "mode"), ("etaeff", "adjust")),
    "ParticleCavity2D": (("u0", "mode"), ("adjust",)),
    "ParticleTwoModes": (("pc1", "pc2"), ()),
    "IdenticalParticles": ((), ("n", "states")),
}

TRAJECTORY_KEYS = ("seed", "eps", "dplimit", "tend", "dt_display", "ntraj")
TRAJECTORY_DEFAULTS = {
    "seed": "0",
    "eps": "1e-6",
    "dplimit": "0.01",
    "tend": "1",
    "dt_display": "0.1",
    "ntraj": "1",
}
OUTPUT_KEYS = ("dump",)


@dataclass
class FreeDecl:
    index: int
    kind: str
    params: Dict[str, str]
    alias: Optional[int] = None
    line: int = field(default=0, compare=False)


@dataclass
class InteractionDecl:
    kind: str
    subsystems: Tuple[int, ...]
    params: Dict[str, str]
    line: int = field(default=0, compare=False)


@dataclass
class SystemConfig:
    frees: List[FreeDecl] = field(default_factory=list)
    interactions: List[InteractionDecl] = field(default_factory=list)
    initial: Dict[int, str] = field(default_factory=dict)
    trajectory: Dict[str, str] = field(default_factory=dict)
    output: Dict[str, str] = field(default_factory=dict)
    initial_lines: Dict[int, int] = field(default_factory=dict, compare=False, repr=False)


# -- parsing ----------------------------------------------------------------------

_HEADER = re.compile(r"^\[\s*(free|interaction|initial|trajectory|output)(?:\s+(\S+))?\s*\]")


def _tokens(text: str, lineno: int):
    text = re.sub(r"\s*=\s*", "=", text)
    return [(tok, lineno) for tok in text.split()]


def _collect(tokens) -> List[Tuple[str, str, int]]:
    """``key=value`` pairs; bare tokens extend the previous value."""
    pairs: List[List] = []
    for tok, line in tokens:
        if "=" in tok:
            key, value = tok.split("=", 1)
            if not key:
                raise ConfigSyntaxError(f"missing key before '=' in {tok!r}", line)
            pairs.append([key, value, line])
        elif pairs:
            pairs[-1][1] = (pairs[-1][1] + " " + tok).strip()
        else:
            raise ConfigSyntaxError(f"expected key=value, got {tok!r}", line)
    return [(k, v, line) for k, v, line in pairs]


def _check_keys(pairs, allowed, what):
    seen = set()
    for key, _, line in pairs:
        if key not in allowed:
            raise ConfigSyntaxError(
                f"unknown key {key!r} for {what} (allowed: {', '.join(sorted(allowed))})", line
            )
        if key in seen:
            raise ConfigSyntaxError(f"duplicate key {key!r} for {what}", line)
        seen.add(key)


def _int(value: str, line: int, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigSyntaxError(f"{what} must be an integer, got {value!r}", line) from None


def _float(value: str, line: int, what: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigSyntaxError(f"{what} must be a number, got {value!r}", line) from None


def _complex(value: str, line: int, what: str) -> complex:
    try:
        if "," in value:
            re_, im = value.split(",")
            return complex(float(re_), float(im))
        return complex(value.replace(" ", ""))
    except ValueError:
        raise ConfigSyntaxError(f"{what} must be a complex number, got {value!r}", line) from None


def _floats(value: str, line: int, what: str, n: Optional[int] = None) -> List[float]:
    parts = [p for p in value.replace(" ", "").split(",") if p]
    vals = [_float(p, line, what) for p in parts]
    if n is not None and len(vals) != n:
        raise ConfigSyntaxError(f"{what} needs {n} comma-separated numbers, got {value!r}", line)
    return vals


def _finish_section(cfg: SystemConfig, section, tokens):
    if section is None:
        if tokens:
            raise ConfigSyntaxError("key=value outside of any section", tokens[0][1])
        return
    name, arg, line = section
    pairs = _collect(tokens)
    if name == "free":
        if arg is None:
            raise ConfigSyntaxError("free section needs an index: [free N]", line)
        index = _int(arg, line, "free index")
        if index != len(cfg.frees):
            raise ConfigSyntaxError(
                f"free sections must be numbered 0, 1, ... in order; expected {len(cfg.frees)}", line
            )
        params = {k: v for k, v, _ in pairs}
        if "alias" in params:
            _check_keys(pairs, {"alias", "kind"}, "an aliased free")
            alias = _int(params["alias"], line, "alias")
            if not 0 <= alias < index:
                raise ConfigSyntaxError(f"alias must name an earlier free, got {alias}", line)
            target = cfg.frees[alias]
            kind = params.get("kind", target.kind)
            if kind != target.kind:
                raise ConfigSyntaxError(f"alias of a {target.kind} cannot have kind {kind}", line)
            cfg.frees.append(FreeDecl(index, kind, {}, alias, line))
            return
        kind = params.pop("kind", None)
        if kind is None:
            raise ConfigSyntaxError("free section needs kind=...", line)
        if kind not in FREE_KEYS:
            raise ConfigSyntaxError(
                f"unknown free kind {kind!r} (known: {', '.join(FREE_KEYS)})", line
            )
        _check_keys(pairs, set(FREE_KEYS[kind]) | {"kind"}, kind)
        missing = [k for k in FREE_KEYS[kind] if k not in params and k not in FREE_OPTIONAL.get(kind, {})]
        if missing:
            raise ConfigSyntaxError(f"{kind} is missing {', '.join(missing)}", line)
        cfg.frees.append(FreeDecl(index, kind, params, None, line))
    elif name == "interaction":
        if arg is not None:
            raise ConfigSyntaxError("write [interaction] without an argument", line)
        params = {k: v for k, v, _ in pairs}
        kind = params.pop("kind", None)
        if kind is None:
            raise ConfigSyntaxError("interaction section needs kind=...", line)
        if kind not in INTERACTION_KEYS:
            raise ConfigSyntaxError(
                f"unknown interaction kind {kind!r} (known: {', '.join(INTERACTION_KEYS)})", line
            )
        required, optional = INTERACTION_KEYS[kind]
        _check_keys(pairs, set(required) | set(optional) | {"kind", "subsystems"}, kind)
        subs = params.pop("subsystems", None)
        if subs is None:
            raise ConfigSyntaxError(f"{kind} needs subsystems=...", line)
        subsystems = tuple(_int(s, line, "subsystem index") for s in subs.replace(" ", "").split(","))
        missing = [k for k in required if k not in params]
        if missing:
            raise ConfigSyntaxError(f"{kind} is missing {', '.join(missing)}", line)
        cfg.interactions.append(InteractionDecl(kind, subsystems, params, line))
    elif name == "initial":
        for key, value, kline in pairs:
            m = re.fullmatch(r"free(\d+)", key)
            if not m:
                raise ConfigSyntaxError(f"initial keys look like free0=..., got {key!r}", kline)
            idx = int(m.group(1))
            if idx in cfg.initial:
                raise ConfigSyntaxError(f"duplicate initial state for free {idx}", kline)
            _parse_state_spec(value, kline)
            cfg.initial[idx] = value
            cfg.initial_lines[idx] = kline
    elif name == "trajectory":
        _check_keys(pairs, set(TRAJECTORY_KEYS), "trajectory")
        for key, value, kline in pairs:
            if key in ("seed", "ntraj"):
                _int(value, kline, key)
            else:
                _float(value, kline, key)
            cfg.trajectory[key] = value
    elif name == "output":
        _check_keys(pairs, set(OUTPUT_KEYS), "output")
        for key, value, kline in pairs:
            _floats(value, kline, key)
            cfg.output[key] = value


def parse_config(text: str) -> SystemConfig:
    """Parse config text; syntax errors carry the offending line number."""
    cfg = SystemConfig()
    section = None
    tokens: list = []
    seen_sections = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = _HEADER.match(line)
            if not m:
                raise ConfigSyntaxError(f"bad section header {line!r}", lineno)
            _finish_section(cfg, section, tokens)
            name, arg = m.group(1), m.group(2)
            if name in ("initial", "trajectory", "output"):
                if name in seen_sections:
                    raise ConfigSyntaxError(f"section [{name}] given twice", lineno)
                seen_sections.add(name)
            section = (name, arg, lineno)
            tokens = _tokens(line[m.end():], lineno)
        else:
            tokens.extend(_tokens(line, lineno))
    _finish_section(cfg, section, tokens)
    if not cfg.frees:
        raise ConfigSyntaxError("config declares no free subsystem")
    for idx in cfg.initial:
        if idx >= len(cfg.frees):
            raise ConfigSyntaxError(
                f"initial state given for missing free {idx}", cfg.initial_lines.get(idx)
            )
    return cfg


def _parse_state_spec(value: str, line: int):
    parts = value.split(None, 1)
    if not parts:
        raise ConfigSyntaxError("empty initial state", line)
    what = parts[0]
    arg = parts[1] if len(parts) > 1 else ""
    if what == "fock":
        return ("fock", _int(arg.strip(), line, "fock"))
    if what == "coherent":
        re_, im = _floats(arg, line, "coherent", 2)
        return ("coherent", complex(re_, im))
    if what == "packet":
        return ("packet", tuple(_floats(arg, line, "packet", 3)))
    if what == "momentum":
        return ("momentum", _int(arg.strip(), line, "momentum"))
    raise ConfigSyntaxError(
        f"unknown initial state {what!r} (use fock n, coherent re,im, packet x0,k0,xsig "
        "or momentum k)",
        line,
    )


# -- serialization ------------------------------------------------------------------


def serialize_config(cfg: SystemConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    out = []
    for f in cfg.frees:
        if f.alias is not None:
            out.append(f"[free {f.index}] alias={f.alias}")
        else:
            kv = " ".join(f"{k}={v}" for k, v in f.params.items())
            out.append(f"[free {f.index}] kind={f.kind} {kv}".rstrip())
    for i in cfg.interactions:
        kv = " ".join(f"{k}={v}" for k, v in i.params.items())
        subs = ",".join(str(s) for s in i.subsystems)
        out.append(f"[interaction] kind={i.kind} subsystems={subs} {kv}".rstrip())
    if cfg.initial:
        out.append("[initial] " + " ".join(f"free{k}={v}" for k, v in cfg.initial.items()))
    if cfg.trajectory:
        out.append("[trajectory] " + " ".join(f"{k}={v}" for k, v in cfg.trajectory.items()))
    if cfg.output:
        out.append("[output] " + " ".join(f"{k}={v}" for k, v in cfg.output.items()))
    return "\n".join(out) + "\n"


# -- building -------------------------------------------------------------------------


def _flag(value: str, line: int, what: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigSyntaxError(f"{what} must be on/off, got {value!r}", line)


def _mode_function(value: str, line: int) -> el.ModeFunction:
    try:
        return el.ModeFunction.parse(value)
    except ConfigError as exc:
        raise ConfigSyntaxError(str(exc), line) from None


def build_frees(cfg: SystemConfig):
    frees = []
    for f in cfg.frees:
        if f.alias is not None:
            frees.append(frees[f.alias])
            continue
        p, line = f.params, f.line
        if f.kind in ("LossyMode", "PumpedLossyMode"):
            dc = _float(p["deltac"], line, "deltac")
            kappa = _float(p["kappa"], line, "kappa")
            cutoff = _int(p["cutoff"], line, "cutoff")
            if f.kind == "LossyMode":
                frees.append(el.LossyMode(dc, kappa, cutoff))
            else:
                eta = _complex(p.get("eta", "0"), line, "eta")
                frees.append(el.PumpedLossyMode(dc, kappa, eta, cutoff))
        else:
            om = _float(p["omrec"], line, "omrec")
            res = _int(p["resolution"], line, "resolution")
            if f.kind == "MovingParticle":
                frees.append(el.MovingParticle(om, res))
            else:
                frees.append(
                    el.PumpedMovingParticle(
                        om, res, _float(p["etaeff"], line, "etaeff"), _mode_function(p["pump"], line)
                    )
                )
    return frees


def _state_for(free, spec: Optional[str], line: int) -> StateVector:
    if spec is None:
        if isinstance(free, el.LossyMode):
            return fock_state(0, free.dim)
        return momentum_state(0, free.dim)
    what, arg = _parse_state_spec(spec, line)
    is_mode = isinstance(free, el.LossyMode)
    if what in ("fock", "coherent") and not is_mode:
        raise ConfigError(f"{what} state given for a particle")
    if what in ("packet", "momentum") and is_mode:
        raise ConfigError(f"{what} state given for a mode")
    if what == "fock":
        return fock_state(arg, free.dim)
    if what == "coherent":
        return coherent_state(arg, free.dim)
    if what == "packet":
        return wave_packet(*arg, free.dim)
    return momentum_state(arg, free.dim)


def build_interactions(cfg: SystemConfig, frees):
    built = []
    wirings = []
    for decl in cfg.interactions:
        p, line, sub = decl.params, decl.line, decl.subsystems
        for s in sub:
            if not 0 <= s < len(frees):
                raise ConfigError(
                    f"line {line}: {decl.kind} on subsystems {sub}: index {s} out of range"
                )

        def at(i):
            if i >= len(sub):
                raise ConfigError(f"line {line}: {decl.kind} needs more subsystems than {sub}")
            return frees[sub[i]]

        adjust = _flag(p.get("adjust", "on"), line, "adjust")
        kind = decl.kind
        if kind == "ParticleOrthogonalToCavity":
            part = at(1)
            if not isinstance(part, el.PumpedMovingParticle) or not isinstance(at(0), el.LossyMode):
                inter = _Unbuilt(kind, ("mode", "pumped_particle"))
            else:
                inter = el.ParticleOrthogonalToCavity(at(0), part, _float(p["u0"], line, "u0"), adjust)
        elif kind == "ParticleAlongCavity":
            eta = _float(p["etaeff"], line, "etaeff") if "etaeff" in p else None
            if not isinstance(at(0), el.LossyMode) or not isinstance(at(1), el.MovingParticle):
                inter = _Unbuilt(kind, ("mode", "particle"))
            else:
                inter = el.ParticleAlongCavity(
                    at(0), at(1), _float(p["u0"], line, "u0"), _mode_function(p["mode"], line), eta,
                    adjust,
                )
        elif kind == "ParticleCavity2D":
            ok = (
                isinstance(at(0), el.LossyMode)
                and isinstance(at(1), el.MovingParticle)
                and isinstance(at(2), el.PumpedMovingParticle)
            )
            if not ok:
                inter = _Unbuilt(kind, ("mode", "particle", "pumped_particle"))
            else:
                inter = el.ParticleCavity2D(
                    at(0), at(1), at(2), _float(p["u0"], line, "u0"), _mode_function(p["mode"], line),
                    adjust,
                )
        elif kind == "ParticleTwoModes":
            pcs = []
            for key in ("pc1", "pc2"):
                j = _int(p[key], line, key)
                if not 0 <= j < len(built) or not isinstance(built[j], el.ParticleAlongCavity):
                    raise ConfigError(
                        f"line {line}: {key}={j} must name an earlier ParticleAlongCavity "
                        "(interactions are numbered from 0 in declaration order)"
                    )
                pcs.append(built[j])
            inter = el.ParticleTwoModes(*pcs)
        else:  # IdenticalParticles
            n = _int(p.get("n", "2"), line, "n")
            part = at(0)
            states = None
            if "states" in p:
                specs = [s.strip() for s in p["states"].split(";") if s.strip()]
                states = [_state_for(part, s, line) for s in specs]
            if not isinstance(part, el.MovingParticle):
                inter = _Unbuilt(kind, ("particle", "particle"))
            else:
                inter = el.IdenticalParticles(part, n, states)
        built.append(inter)
        wirings.append((inter, sub))
    return built, wirings


class _Unbuilt(el.Interaction):
    """Stand-in for an interaction whose slots got the wrong kinds.

    It lets the composite report the wiring error in its usual terms.
    """

    def __init__(self, kind, slot_kinds):
        self.name = kind
        self.slot_kinds = tuple(slot_kinds)
        self.frees = ()
        self.adjusts = True


def build_system(cfg: SystemConfig, backend=None) -> Tuple[Composite, StateVector]:
    frees = build_frees(cfg)
    _, wirings = build_interactions(cfg, frees)
    composite = Composite(frees, wirings, backend=backend)
    parts = [
        _state_for(f, cfg.initial.get(i), cfg.initial_lines.get(i)) for i, f in enumerate(frees)
    ]
    psi0 = parts[0] if len(parts) == 1 else direct_product(*parts)
    return composite, psi0


def trajectory_params(cfg: SystemConfig, seed=None, dump_times=None) -> Tuple[TrajectoryParams, int]:
    t = dict(TRAJECTORY_DEFAULTS)
    t.update(cfg.trajectory)
    dumps = list(dump_times or [])
    if "dump" in cfg.output:
        dumps += _floats(cfg.output["dump"], None, "dump")
    params = TrajectoryParams(
        seed=int(t["seed"]) if seed is None else int(seed),
        eps=float(t["eps"]),
        dplimit=float(t["dplimit"]),
        t_end=float(t["tend"]),
        display_dt=float(t["dt_display"]),
        dump_times=dumps,
    )
    return params, int(t["ntraj"])


__all__ = [
    "FreeDecl",
    "InteractionDecl",
    "SystemConfig",
    "build_system",
    "parse_config",
    "serialize_config",
    "trajectory_params",
]
