"""Model configuration records: lag index sets, spline spacings, estimation settings."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

COMPONENTS = ("P", "L", "R")
COMPONENT_NAMES = {"P": "price", "L": "load", "R": "renewables"}


def _span(a, b):
    return tuple(range(a, b + 1))


def _freeze(mapping):
    return {key: tuple(sorted(int(k) for k in value)) for key, value in mapping.items()}


@dataclass(frozen=True)
class LagSpec:
    """Lag index sets per equation.

    ``mean[i][j]`` holds the lags of source ``j`` entering equation ``i``,
    ``periodic[i]`` the own lags with calendar-varying coefficients and
    ``tarch[i]`` the residual lags of the volatility equation.
    """

    mean: dict
    periodic: dict
    tarch: dict

    def __post_init__(self):
        mean = {i: _freeze(self.mean.get(i, {})) for i in COMPONENTS}
        for i in COMPONENTS:
            for j in COMPONENTS:
                mean[i].setdefault(j, ())
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "periodic", _freeze({i: self.periodic.get(i, ()) for i in COMPONENTS}))
        object.__setattr__(self, "tarch", _freeze({i: self.tarch.get(i, ()) for i in COMPONENTS}))
        self.validate()

    def validate(self):
        for i in COMPONENTS:
            for j in COMPONENTS:
                if any(k < 1 for k in self.mean[i][j]):
                    raise ValueError(f"lags must be positive (I[{i},{j}])")
            if any(k < 1 for k in self.tarch[i]):
                raise ValueError(f"lags must be positive (J[{i}])")
            missing = set(self.periodic[i]) - set(self.mean[i][i])
            if missing:
                raise ValueError(f"periodic lags {sorted(missing)} of {i} not in its own lag set")

    @property
    def max_lag(self):
        lags = [k for i in COMPONENTS for j in COMPONENTS for k in self.mean[i][j]]
        return max(lags, default=0)

    @property
    def max_tarch_lag(self):
        return max((k for i in COMPONENTS for k in self.tarch[i]), default=0)

    def to_dict(self):
        return {
            "mean": {i: {j: list(v) for j, v in d.items()} for i, d in self.mean.items()},
            "periodic": {i: list(v) for i, v in self.periodic.items()},
            "tarch": {i: list(v) for i, v in self.tarch.items()},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(mean=data["mean"], periodic=data["periodic"], tarch=data["tarch"])

    @classmethod
    def default(cls):
        weekly = _span(1, 361) + (504, 505, 672, 673, 840, 841, 1008, 1009)
        short = _span(1, 49)
        return cls(
            mean={
                "P": {"P": weekly, "L": weekly, "R": short},
                "L": {"L": weekly, "R": short},
                "R": {"R": _span(1, 361)},
            },
            periodic={"P": (1, 2, 24, 25, 168, 169), "L": (1, 2, 24, 25, 168, 169), "R": (1, 2, 23, 24, 25)},
            tarch={
                "P": _span(1, 361) + (504, 505, 672, 673, 840, 841),
                "L": _span(1, 361) + (504, 505, 672, 673, 840, 841),
                "R": _span(1, 361),
            },
        )

    @classmethod
    def compact(cls):
        """A small lag layout for demos and simulation studies."""
        return cls(
            mean={
                "P": {"P": (1, 2, 24, 168), "L": (1, 24), "R": (1, 2)},
                "L": {"L": (1, 2, 24, 168), "R": (1,)},
                "R": {"R": (1, 2, 24)},
            },
            periodic={"P": (1,), "L": (1,), "R": (1,)},
            tarch={"P": (1, 2, 24), "L": (1, 2, 24), "R": (1, 2, 24)},
        )

    def without_periodic(self):
        return LagSpec(mean=self.mean, periodic={}, tarch=self.tarch)


@dataclass(frozen=True)
class BasisConfig:
    """Spline degree, knot spacings and periodicities of the deterministic bases."""

    degree: int = 3
    weekly_knot_distance: float = 4.0
    daily_period: float = 24.0
    daily_knot_distance: float = 4.0
    annual_period: float = 8765.76
    annual_count: int = 12
    annual_count_renewables: int = 6
    dst_shift: int = 1

    # phase-in / phase-out length in hours
    phase_hours = 12

    def __post_init__(self):
        for name in ("weekly_knot_distance", "daily_period", "daily_knot_distance", "annual_period"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.degree < 0 or self.annual_count < 2 or self.annual_count_renewables < 2:
            raise ValueError("invalid spline counts")
        if self.phase_hours % self.weekly_knot_distance:
            raise ValueError("weekly knot distance must divide 12 hours")

    @property
    def daily_count(self):
        return int(round(self.daily_period / self.daily_knot_distance))

    def annual_knot_distance(self, component):
        count = self.annual_count_renewables if component == "R" else self.annual_count
        return self.annual_period / count

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EstimatorConfig:
    tolerance: float = 1e-3
    max_iterations: int = 4
    standardize: bool = True
    sigma_floor: float = 1e-4
    # basis columns peaking below this inside the sample are left out
    min_support: float = 0.01
    phase_precedence: str = "in"
    timezone: str = "Europe/Berlin"
    basis: BasisConfig = field(default_factory=BasisConfig)
    lags: LagSpec = field(default_factory=LagSpec.default)
    threads: int = 1

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_iterations < 1 or self.sigma_floor <= 0 or self.min_support < 0:
            raise ValueError("estimator settings must be positive")
        if self.phase_precedence not in ("in", "out"):
            raise ValueError("phase_precedence must be 'in' or 'out'")

    def to_dict(self):
        return {
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "standardize": self.standardize,
            "sigma_floor": self.sigma_floor,
            "min_support": self.min_support,
            "phase_precedence": self.phase_precedence,
            "timezone": self.timezone,
            "basis": self.basis.to_dict(),
            "lags": self.lags.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        basis = BasisConfig(**data.pop("basis", {}))
        lags = LagSpec.from_dict(data.pop("lags")) if "lags" in data else LagSpec.default()
        data.pop("threads", None)
        return cls(basis=basis, lags=lags, **data)
