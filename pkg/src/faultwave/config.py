"""Run configuration: documented plain-text format with strict validation.

Files use INI-style sections (`configparser` dialect).  Unknown sections or
keys are rejected.  Stresses are MPa, distances km except where a key name
says otherwise (``d_c`` is meters, matching the friction module constructors).

Schema (defaults in parentheses)::

    [run]
    end_time = <s>                  required
    cfl = <float> (0.5)
    snapshot_stride = <int> (0)     fault snapshot every N steps; 0 = off
    output_dir = <path> (out)

    [operators]
    family = traditional|dp_upwind|drp
    order = <int>
    alpha_tol = <float> (0.05)      drp only

    [material]
    rho = <g/cm^3>   cp = <km/s>   cs = <km/s>

    [block.left] / [block.right]
    mapping = dip_shear             (the only mapping with fault support)
    width = <km>  dip_deg = <deg>  depth = <km>  z0 = <km>  z1 = <km>
    cells_q = <int>  cells_r = <int>  cells_s = <int>

    [boundaries]
    left.q0 = absorbing             one key per exterior face;
    left.r0 = free_surface          fault faces (left.q1 / right.q0) are
    ...                             implicit and may not appear here

    [friction]
    law = slip_weakening            (rate_state_aging / rate_state_slip
                                     accepted with keys a, b, f0, v0, d_c)
    f_s = <float>  f_d = <float>  d_c = <m>  cohesion = <MPa>
                                    base values cover the whole fault

    [friction.region.<name>]        rectangle overriding friction parameters
    ydip0 = <km> ydip1 = <km> z0 = <km> z1 = <km>
    f_s = ... f_d = ... d_c = ... cohesion = ...   (any subset)

    [initial_stress]
    normal_gradient = <MPa/km> (0)  T0n = normal_gradient * ydip
    shear_ratio = <float> (0)       T0m = shear_ratio * sigma0n
    strike = <MPa> (0)              T0l

    [initial_stress.patch.<name>]   rectangle overriding the shear preload
    ydip0 = ... z1 = ...
    overstress = <float>            T0m = (f_s + overstress) sigma0n + C0

    [receivers]
    <name> = <ydip km> <strike km>  fault-plane coordinates
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Malformed, unknown, or inconsistent configuration content."""


_BC_KINDS = ("free_surface", "absorbing")
_FACES = ("q0", "q1", "r0", "r1", "s0", "s1")
_FRICTION_LAWS = ("slip_weakening", "rate_state_aging", "rate_state_slip")


@dataclass
class RectValues:
    """A fault-plane rectangle with parameter overrides."""

    name: str
    ydip0: float
    ydip1: float
    z0: float
    z1: float
    values: dict = field(default_factory=dict)

    def contains(self, ydip, z):
        return ((ydip >= self.ydip0) & (ydip <= self.ydip1)
                & (z >= self.z0) & (z <= self.z1))


@dataclass
class RunConfig:
    end_time: float
    cfl: float = 0.5
    snapshot_stride: int = 0
    output_dir: str = "out"
    family: str = "dp_upwind"
    order: int = 4
    alpha_tol: float = 0.05
    rho: float = 2.7
    cp: float = 5.716
    cs: float = 3.3
    blocks: dict = field(default_factory=dict)      # side -> mapping params
    boundaries: dict = field(default_factory=dict)  # (side, face) -> kind
    friction_law: str = "slip_weakening"
    friction_base: dict = field(default_factory=dict)
    friction_regions: list = field(default_factory=list)
    stress_normal_gradient: float = 0.0   # MPa per km down dip
    stress_shear_ratio: float = 0.0
    stress_strike: float = 0.0            # MPa
    stress_patches: list = field(default_factory=list)
    receivers: list = field(default_factory=list)   # (name, ydip, z)

    def validate(self):
        if not self.end_time > 0:
            raise ConfigError("end_time must be positive")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        if self.snapshot_stride < 0:
            raise ConfigError("snapshot_stride must be nonnegative")
        if set(self.blocks) != {"left", "right"}:
            raise ConfigError("need [block.left] and [block.right]")
        for side in ("left", "right"):
            b = self.blocks[side]
            for key in ("width", "depth", "dip_deg", "z0", "z1",
                        "cells_q", "cells_r", "cells_s"):
                if key not in b:
                    raise ConfigError(f"block.{side} missing {key}")
        if self.friction_law not in _FRICTION_LAWS:
            raise ConfigError(f"unknown friction law {self.friction_law!r}")
        for (side, face), kind in self.boundaries.items():
            if face not in _FACES or side not in ("left", "right"):
                raise ConfigError(f"unknown boundary face {side}.{face}")
            if kind not in _BC_KINDS:
                raise ConfigError(f"unknown boundary kind {kind!r}")
            if (side, face) in (("left", "q1"), ("right", "q0")):
                raise ConfigError("fault faces cannot carry boundary kinds")
        dip0, dip1, z0, z1 = self.fault_extent()
        for name, ydip, z in self.receivers:
            if not (dip0 <= ydip <= dip1 and z0 <= z <= z1):
                raise ConfigError(f"receiver {name} outside the fault plane")
        return self

    def fault_extent(self):
        import math
        b = self.blocks["left"]
        dip1 = b["depth"] / math.sin(math.radians(b["dip_deg"]))
        return 0.0, dip1, b["z0"], b["z1"]


_RUN_KEYS = {"end_time": float, "cfl": float, "snapshot_stride": int,
             "output_dir": str}
_OPS_KEYS = {"family": str, "order": int, "alpha_tol": float}
_MAT_KEYS = {"rho": float, "cp": float, "cs": float}
_BLOCK_KEYS = {"mapping": str, "width": float, "dip_deg": float,
               "depth": float, "z0": float, "z1": float, "cells_q": int,
               "cells_r": int, "cells_s": int}
_FRICTION_KEYS = {"law": str, "f_s": float, "f_d": float, "d_c": float,
                  "cohesion": float, "a": float, "b": float, "f0": float,
                  "v0": float}
_RECT_KEYS = {"ydip0": float, "ydip1": float, "z0": float, "z1": float}
_STRESS_KEYS = {"normal_gradient": float, "shear_ratio": float,
                "strike": float}


def _take(section, allowed, where):
    out = {}
    for key, raw in section.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{where}]")
        try:
            out[key] = allowed[key](raw)
        except ValueError as err:
            raise ConfigError(f"bad value for {key!r} in [{where}]: {err}")
    return out


def _rect(name, section, extra, where):
    keys = dict(_RECT_KEYS)
    keys.update(extra)
    vals = _take(section, keys, where)
    for k in _RECT_KEYS:
        if k not in vals:
            raise ConfigError(f"[{where}] missing {k}")
    rect = RectValues(name=name, ydip0=vals.pop("ydip0"),
                      ydip1=vals.pop("ydip1"), z0=vals.pop("z0"),
                      z1=vals.pop("z1"), values=vals)
    return rect


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse configuration: {err}")

    cfg = RunConfig(end_time=0.0)
    seen = set()
    for name in parser.sections():
        section = parser[name]
        seen.add(name)
        if name == "run":
            vals = _take(section, _RUN_KEYS, name)
            if "end_time" not in vals:
                raise ConfigError("[run] must set end_time")
            for k, v in vals.items():
                setattr(cfg, k, v)
        elif name == "operators":
            vals = _take(section, _OPS_KEYS, name)
            cfg.family = vals.get("family", cfg.family)
            cfg.order = vals.get("order", cfg.order)
            cfg.alpha_tol = vals.get("alpha_tol", cfg.alpha_tol)
        elif name == "material":
            vals = _take(section, _MAT_KEYS, name)
            for k, v in vals.items():
                setattr(cfg, k, v)
        elif name.startswith("block."):
            side = name.split(".", 1)[1]
            if side not in ("left", "right"):
                raise ConfigError(f"unknown block side {side!r}")
            vals = _take(section, _BLOCK_KEYS, name)
            if vals.get("mapping", "dip_shear") != "dip_shear":
                raise ConfigError("only the dip_shear mapping carries a fault")
            vals.pop("mapping", None)
            cfg.blocks[side] = vals
        elif name == "boundaries":
            for key, raw in section.items():
                try:
                    side, face = key.split(".")
                except ValueError:
                    raise ConfigError(f"boundary key {key!r} must be side.face")
                cfg.boundaries[(side, face)] = raw.strip()
        elif name == "friction":
            vals = _take(section, _FRICTION_KEYS, name)
            cfg.friction_law = vals.pop("law", cfg.friction_law)
            cfg.friction_base = vals
        elif name.startswith("friction.region."):
            rname = name.split(".", 2)[2]
            extra = {k: float for k in ("f_s", "f_d", "d_c", "cohesion")}
            cfg.friction_regions.append(_rect(rname, section, extra, name))
        elif name == "initial_stress":
            vals = _take(section, _STRESS_KEYS, name)
            cfg.stress_normal_gradient = vals.get("normal_gradient", 0.0)
            cfg.stress_shear_ratio = vals.get("shear_ratio", 0.0)
            cfg.stress_strike = vals.get("strike", 0.0)
        elif name.startswith("initial_stress.patch."):
            pname = name.split(".", 2)[2]
            extra = {"overstress": float}
            cfg.stress_patches.append(_rect(pname, section, extra, name))
        elif name == "receivers":
            for key, raw in section.items():
                parts = raw.split()
                if len(parts) != 2:
                    raise ConfigError(
                        f"receiver {key!r} needs '<ydip> <strike>'")
                cfg.receivers.append((key, float(parts[0]), float(parts[1])))
        else:
            raise ConfigError(f"unknown section [{name}]")
    return cfg.validate()


def load(path) -> RunConfig:
    with open(path) as fh:
        return loads(fh.read())


def dumps(cfg: RunConfig) -> str:
    out = io.StringIO()

    def sec(name, pairs):
        out.write(f"[{name}]\n")
        for k, v in pairs:
            out.write(f"{k} = {v}\n")
        out.write("\n")

    sec("run", [("end_time", repr(cfg.end_time)), ("cfl", repr(cfg.cfl)),
                ("snapshot_stride", cfg.snapshot_stride),
                ("output_dir", cfg.output_dir)])
    ops = [("family", cfg.family), ("order", cfg.order)]
    if cfg.family == "drp":
        ops.append(("alpha_tol", repr(cfg.alpha_tol)))
    sec("operators", ops)
    sec("material", [("rho", repr(cfg.rho)), ("cp", repr(cfg.cp)),
                     ("cs", repr(cfg.cs))])
    for side in ("left", "right"):
        b = cfg.blocks[side]
        sec(f"block.{side}", [("mapping", "dip_shear")] +
            [(k, repr(b[k]) if isinstance(b[k], float) else b[k])
             for k in ("width", "dip_deg", "depth", "z0", "z1",
                       "cells_q", "cells_r", "cells_s")])
    if cfg.boundaries:
        sec("boundaries", [(f"{side}.{face}", kind)
                           for (side, face), kind in sorted(cfg.boundaries.items())])
    fr = [("law", cfg.friction_law)]
    fr += [(k, repr(v)) for k, v in cfg.friction_base.items()]
    sec("friction", fr)
    for rect in cfg.friction_regions:
        sec(f"friction.region.{rect.name}",
            [(k, repr(getattr(rect, k))) for k in ("ydip0", "ydip1", "z0", "z1")]
            + [(k, repr(v)) for k, v in rect.values.items()])
    sec("initial_stress", [("normal_gradient", repr(cfg.stress_normal_gradient)),
                           ("shear_ratio", repr(cfg.stress_shear_ratio)),
                           ("strike", repr(cfg.stress_strike))])
    for rect in cfg.stress_patches:
        sec(f"initial_stress.patch.{rect.name}",
            [(k, repr(getattr(rect, k))) for k in ("ydip0", "ydip1", "z0", "z1")]
            + [(k, repr(v)) for k, v in rect.values.items()])
    if cfg.receivers:
        sec("receivers", [(name, f"{repr(y)} {repr(z)}")
                          for name, y, z in cfg.receivers])
    return out.getvalue()


def dump(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(cfg))
