"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key must be known;
list-valued keys take comma-separated values.  Cross-field rules are checked
after parsing so that messages can name the offending line.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .constitutive import FAMILIES, BoundedIncreasing, Constant, FluidParams, ThermoCoupled
from .geometry import PROFILES, ThinDomain
from .problem import SCENARIOS, XI_FAMILIES, XiLaw, coupled_data, couette_data, mms_data, zero_data
from .stepper import RegularizationConfig, StepConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _strs(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


# key -> (parser, default)
SCHEMA = {
    "scenario": (str, "couette"),
    "p": (float, 1.5),
    "mu.family": (str, "constant"),
    "mu.c": (float, 1.0),
    "mu.mu0": (float, 1.0),
    "mu.mu1": (float, 2.0),
    "mu.alpha": (float, 1.0),
    "mu.beta": (float, 0.5),
    "domain.L": (float, 1.0),
    "domain.profile": (str, "constant"),
    "domain.h0": (float, 0.5),
    "domain.slope": (float, 0.0),
    "domain.amp": (float, 0.0),
    "domain.waves": (float, 1.0),
    "mesh.nx": (int, 4),
    "mesh.nz": (int, 2),
    "U": (float, 1.0),
    "k": (float, 0.3),
    "s": (float, 0.0),
    "fx": (float, 0.0),
    "fz": (float, 0.0),
    "theta0": (float, 1.0),
    "xi.family": (str, "one"),
    "xi.rate": (float, 0.0),
    "xi.initial": (float, 1.0),
    "T": (float, 0.5),
    "dt": (float, 0.1),
    "newton_tol": (float, 1e-10),
    "newton_max": (int, 50),
    "eps_schedule": (_floats, (1e-1, 1e-2, 1e-3, 1e-4)),
    "eta": (float, 1e-8),
    "eta_floor": (float, 1e-12),
    "eta_adapt": (_bool, True),
    "delta": (float, 1e-4),
    "picard_tol": (float, 1e-8),
    "picard_max": (int, 20),
    "output.fields": (_strs, ("last",)),
    "deterministic": (_bool, False),
    "mms.meshes": (_strs, ("8x4", "16x8")),
    "sweep.key": (str, ""),
    "sweep.values": (_strs, ()),
    "sweep.workers": (int, 1),
}


@dataclass
class RunConfig:
    values: dict
    lines: dict = field(default_factory=dict)  # key -> source line number
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    def where(self, key) -> str:
        line = self.lines.get(key)
        return f"{self.source}:{line}" if line else self.source

    def with_value(self, key, text):
        parser, _ = SCHEMA[key]
        vals = dict(self.values)
        vals[key] = parser(text)
        out = RunConfig(vals, dict(self.lines), self.source)
        out.validate()
        return out

    # -- builders
    def domain(self) -> ThinDomain:
        v = self.values
        return ThinDomain(
            L=v["domain.L"], profile=v["domain.profile"], h0=v["domain.h0"],
            slope=v["domain.slope"], amp=v["domain.amp"], waves=v["domain.waves"],
        )

    def params(self) -> FluidParams:
        v = self.values
        fam = v["mu.family"]
        if fam == "constant":
            mu = Constant(v["mu.c"])
        elif fam == "bounded":
            mu = BoundedIncreasing(v["mu.mu0"], v["mu.mu1"])
        else:
            mu = ThermoCoupled(v["mu.mu0"], v["mu.mu1"], v["mu.alpha"], v["mu.beta"])
        return FluidParams(v["p"], mu)

    def xi(self) -> XiLaw:
        v = self.values
        return XiLaw(v["xi.family"], v["xi.rate"], v["xi.initial"])

    def data(self):
        v = self.values
        sc = v["scenario"]
        if sc == "zero":
            return zero_data(T=v["T"], k=v["k"])
        if sc == "mms-p2":
            return mms_data(self.domain(), c=v["mu.c"], T=v["T"])
        kw = dict(U=v["U"], k=v["k"], s=v["s"], fx=v["fx"], fz=v["fz"], xi=self.xi(), T=v["T"])
        if sc == "couette":
            return couette_data(self.domain(), **kw)
        return coupled_data(self.domain(), theta0=v["theta0"], **kw)

    def reg(self) -> RegularizationConfig:
        v = self.values
        return RegularizationConfig(
            eps_schedule=v["eps_schedule"], eta=v["eta"], eta_floor=v["eta_floor"],
            eta_adapt=v["eta_adapt"], delta=v["delta"], picard_tol=v["picard_tol"],
            picard_max=v["picard_max"],
        )

    def step(self) -> StepConfig:
        v = self.values
        return StepConfig(dt=v["dt"], newton_tol=v["newton_tol"], newton_max=v["newton_max"])

    # -- checks
    def _fail(self, key, msg):
        raise ConfigError(f"{self.where(key)}: {key}: {msg}")

    def validate(self) -> None:
        v = self.values
        choices = {
            "scenario": SCENARIOS,
            "mu.family": tuple(FAMILIES),
            "domain.profile": PROFILES,
            "xi.family": XI_FAMILIES,
        }
        for key, allowed in choices.items():
            if v[key] not in allowed:
                self._fail(key, f"{v[key]!r} is not one of {', '.join(allowed)}")
        if not (6 / 5 <= v["p"] < 2 or v["p"] == 2):
            self._fail("p", f"p = {v['p']:g} outside the accepted range 6/5 <= p < 2 (or p = 2)")
        if v["xi.initial"] != 1.0:
            self._fail("xi.initial", f"xi(0) = {v['xi.initial']:g}, but the modulation must satisfy xi(0) = 1")
        if v["scenario"] in ("couette", "coupled", "mms-p2") and v["domain.profile"] != "constant":
            self._fail("domain.profile", f"scenario {v['scenario']!r} requires a constant thickness profile")
        if v["scenario"] == "mms-p2":
            if v["p"] != 2 or v["mu.family"] != "constant":
                self._fail("scenario", "mms-p2 needs p = 2 and mu.family = constant")
            if v["domain.h0"] != 1.0:
                self._fail("domain.h0", "mms-p2 is posed on a film of unit thickness")
        if v["k"] < 0:
            self._fail("k", "friction threshold must be nonnegative")
        if v["mesh.nx"] < 1 or v["mesh.nz"] < 1:
            self._fail("mesh.nx" if v["mesh.nx"] < 1 else "mesh.nz", "mesh counts must be >= 1")
        for key in ("mms.meshes",):
            for item in v[key]:
                parts = item.lower().split("x")
                if len(parts) != 2 or not all(s.isdigit() and int(s) > 0 for s in parts):
                    self._fail(key, f"mesh entry {item!r} must look like NXxNZ")
        if v["sweep.values"] and v["sweep.key"] not in SCHEMA:
            self._fail("sweep.key", f"unknown sweep key {v['sweep.key']!r}")
        fields_ = v["output.fields"]
        if not (fields_ in (("last",), ("all",), ("none",)) or all(s.isdigit() for s in fields_)):
            self._fail("output.fields", "expected last, all, none or a list of step indices")
        try:
            self.domain()
            self.params()
            self.reg()
            self.step()
            self.data()
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {exc}") from exc
        steps = round(v["T"] / v["dt"])
        if steps < 1 or abs(steps * v["dt"] - v["T"]) > 1e-9 * max(v["T"], 1.0):
            self._fail("dt", f"T = {v['T']:g} is not an integer multiple of dt = {v['dt']:g}")

    def mms_meshes(self):
        return [tuple(int(s) for s in item.lower().split("x")) for item in self.values["mms.meshes"]]

    def dump(self) -> str:
        out = []
        for key in SCHEMA:
            val = self.values[key]
            if isinstance(val, tuple):
                val = ", ".join(f"{x!r}" if isinstance(x, float) else str(x) for x in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = repr(val)
            out.append(f"{key} = {val}")
        return "\n".join(out) + "\n"


def defaults() -> RunConfig:
    return RunConfig({k: d for k, (_, d) in SCHEMA.items()})


def parse_config_text(text, source="<string>") -> RunConfig:
    values = {k: d for k, (_, d) in SCHEMA.items()}
    lines = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{no}: unknown key {key!r}")
        if key in lines:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r} (first set on line {lines[key]})")
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{no}: {key}: cannot parse {val!r} ({exc})") from exc
        lines[key] = no
    cfg = RunConfig(values, lines, source)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config_text(text, str(path))


__all__ = ["ConfigError", "RunConfig", "SCHEMA", "defaults", "load_config", "parse_config_text"]
