"""Flat ``key = value`` run configuration with typed validation.

Every stage default can be overridden; unknown keys and out-of-range values
are rejected before any work starts.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError, ParameterError
from .features import LbpConfig
from .localization import LocalizationParams
from .lvq import LvqConfig


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    canny_sigma: float = 1.4
    canny_high_frac: float = 0.2
    canny_low_frac: float = 0.4
    pupil_center_tolerance: float = 10.0
    iris_center_tolerance: float = 0.5
    hough_min_support: float = 0.3
    radial_res: int = 40
    angular_res: int = 240
    lbp_p: int = 8
    lbp_r: int = 1
    lbp_uniform: bool = True
    lbp_contrast: bool = False
    lvq_learning_rates: tuple[float, ...] = (0.1, 0.2, 0.3)
    lvq_epochs: int = 500
    lvq_prototypes_per_class: int = 2
    lvq_cap: int = 40
    train_fraction: float = 0.7
    jobs: int = 1

    # key in the file -> attribute
    KEYS = {
        "seed": "seed",
        "canny.sigma": "canny_sigma",
        "canny.high_frac": "canny_high_frac",
        "canny.low_frac": "canny_low_frac",
        "hough.pupil_center_tolerance": "pupil_center_tolerance",
        "hough.iris_center_tolerance": "iris_center_tolerance",
        "hough.min_support": "hough_min_support",
        "normalize.radial_res": "radial_res",
        "normalize.angular_res": "angular_res",
        "lbp.P": "lbp_p",
        "lbp.R": "lbp_r",
        "lbp.uniform": "lbp_uniform",
        "lbp.contrast": "lbp_contrast",
        "lvq.learning_rates": "lvq_learning_rates",
        "lvq.epochs": "lvq_epochs",
        "lvq.prototypes_per_class": "lvq_prototypes_per_class",
        "lvq.cap": "lvq_cap",
        "split.train_fraction": "train_fraction",
        "jobs": "jobs",
    }

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, key: str, why: str):
            if not ok:
                raise ConfigError(f"{key}: {why}")

        need(self.canny_sigma > 0, "canny.sigma", "must be > 0")
        need(0 < self.canny_high_frac <= 1, "canny.high_frac", "must lie in (0, 1]")
        need(0 < self.canny_low_frac < 1, "canny.low_frac", "must lie in (0, 1)")
        need(self.pupil_center_tolerance >= 0, "hough.pupil_center_tolerance", "must be >= 0")
        need(0 < self.iris_center_tolerance < 1, "hough.iris_center_tolerance", "must lie in (0, 1)")
        need(0 <= self.hough_min_support <= 1, "hough.min_support", "must lie in [0, 1]")
        need(self.radial_res >= 10 and self.radial_res % 10 == 0, "normalize.radial_res", "must be a positive multiple of 10")
        need(self.angular_res >= 10 and self.angular_res % 10 == 0, "normalize.angular_res", "must be a positive multiple of 10")
        need(len(self.lvq_learning_rates) >= 1, "lvq.learning_rates", "needs at least one member")
        need(0 < self.train_fraction <= 1, "split.train_fraction", "must lie in (0, 1]")
        need(self.jobs >= 1, "jobs", "must be >= 1")
        try:
            self.lbp_config()
        except ParameterError as exc:
            raise ConfigError(f"lbp: {exc}") from None
        try:
            self.member_configs()
        except ParameterError as exc:
            raise ConfigError(f"lvq: {exc}") from None

    def lbp_config(self) -> LbpConfig:
        return LbpConfig(self.lbp_p, self.lbp_r, self.lbp_uniform, self.lbp_contrast)

    def localization_params(self) -> LocalizationParams:
        return LocalizationParams(
            canny_sigma=self.canny_sigma,
            canny_high_frac=self.canny_high_frac,
            canny_low_frac=self.canny_low_frac,
            pupil_center_tolerance=self.pupil_center_tolerance,
            iris_center_tolerance=self.iris_center_tolerance,
            min_support=self.hough_min_support,
        )

    def member_configs(self) -> list[LvqConfig]:
        return [
            LvqConfig(
                learning_rate=a,
                epochs=self.lvq_epochs,
                prototypes_per_class=self.lvq_prototypes_per_class,
                total_prototypes_cap=self.lvq_cap,
                seed=self.seed + i,
            )
            for i, a in enumerate(self.lvq_learning_rates)
        ]

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def dumps(self) -> str:
        lines = []
        for key, attr in self.KEYS.items():
            v = getattr(self, attr)
            if isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, tuple):
                text = ",".join(repr(x) for x in v)
            else:
                text = repr(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, source: str = "<config>") -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in cls.KEYS:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            attr = cls.KEYS[key]
            kind = types[attr]
            try:
                if kind == "bool":
                    values[attr] = _parse_bool(value)
                elif kind == "int":
                    values[attr] = int(value)
                elif kind == "float":
                    values[attr] = float(value)
                else:
                    values[attr] = _parse_floats(value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.loads(text, str(path))
