"""Experiment configuration: dataclass, flat key = value file parser.

The file format is diff-friendly UTF-8 lines, ``key = value`` with
``#`` comments; list values are comma separated.  Every key has a
default matching the reference simulation setup, so an empty file is a
valid config.
"""

from dataclasses import asdict, dataclass, field, fields

EQ_EXACT_MMSE = "exact_mmse"
EQ_WIENER = "wiener"
EQ_LMS = "lms_teq"
EQ_QLMS = "qlms_teq"
EQ_SQLMS_COMBINE = "sqlms_combine"
EQ_SQLMS_SELECT = "sqlms_select"
EQUALIZER_KINDS = (EQ_EXACT_MMSE, EQ_WIENER, EQ_LMS, EQ_QLMS, EQ_SQLMS_COMBINE, EQ_SQLMS_SELECT)

TILDE_MODES = ("training_truth", "hard_decision", "decoder_mean")


class ConfigError(ValueError):
    """Invalid configuration file, key or value."""


@dataclass
class ExperimentConfig:
    channel_taps: tuple = (0.227, 0.46, 0.688, 0.46, 0.227)
    n1: int = 9
    n2: int = 5
    constraint_length: int = 3
    generators: tuple = (0o7, 0o5)
    termination: str = "terminated"
    l_t: int = 1024
    l_d: int = 4096
    n_min: int = 500
    k_max: int = 8
    mu: float = 0.03
    mu_c: float = 0.1
    equalizer: str = EQ_QLMS
    tilde_x_mode: str = "hard_decision"
    ebn0_grid: tuple = (4.0, 6.0, 8.0, 10.0)
    turbo_iterations: int = 5
    trials: int = 20
    seed: int = 1
    ber_target: float = 1e-3
    tol_db: float = 0.25
    bracket_db: tuple = (3.0, 13.0)
    frame_budget: int = 50
    ia_grid: tuple = tuple(round(0.1 * i, 1) for i in range(10))
    workers: int = 1
    extra_feedback_taps: int = 0
    max_log: bool = False

    def __post_init__(self):
        if len(self.channel_taps) < 1:
            raise ConfigError("channel_taps must be nonempty")
        if self.n1 < 0 or self.n2 < 0:
            raise ConfigError("n1 and n2 must be >= 0")
        for name in ("l_t", "l_d", "n_min", "k_max", "turbo_iterations", "trials",
                     "frame_budget", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.l_d % 2 or self.l_d // 2 <= self.constraint_length - 1:
            raise ConfigError("l_d must be even and long enough for one code block")
        if self.equalizer not in EQUALIZER_KINDS:
            raise ConfigError(f"unknown equalizer {self.equalizer!r}")
        if self.tilde_x_mode not in TILDE_MODES:
            raise ConfigError(f"unknown tilde_x_mode {self.tilde_x_mode!r}")
        if len(self.ebn0_grid) == 0:
            raise ConfigError("ebn0_grid must be nonempty")
        if not 0.0 < self.ber_target < 0.5:
            raise ConfigError("ber_target must lie in (0, 0.5)")
        if self.tol_db <= 0.0:
            raise ConfigError("tol_db must be positive")
        if len(self.bracket_db) != 2 or not self.bracket_db[0] < self.bracket_db[1]:
            raise ConfigError("bracket_db must be an increasing (lo, hi) pair")
        if any(not 0.0 <= ia < 1.0 for ia in self.ia_grid):
            raise ConfigError("ia_grid values must lie in [0, 1)")
        if self.mu < 0.0 or self.mu_c < 0.0:
            raise ConfigError("step sizes must be >= 0")
        if self.extra_feedback_taps < 0:
            raise ConfigError("extra_feedback_taps must be >= 0")

    def code_config(self):
        from .modem import CodeConfig

        return CodeConfig(
            constraint_length=self.constraint_length,
            generators=tuple(self.generators),
            termination=self.termination,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def _parse_bool(tok: str) -> bool:
    low = tok.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {tok!r}")


def _parse_value(name: str, tok: str, pytype):
    try:
        if pytype is bool:
            return _parse_bool(tok)
        if pytype is int:
            return int(tok.strip())
        if pytype is float:
            return float(tok.strip())
        if pytype is str:
            return tok.strip()
        if pytype is tuple:
            items = [t.strip() for t in tok.split(",") if t.strip()]
            if name == "generators":
                return tuple(int(t, 8) for t in items)  # octal tap sets
            if name in ("ebn0_grid", "bracket_db", "ia_grid", "channel_taps"):
                return tuple(float(t) for t in items)
            return tuple(items)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {tok!r}") from exc
    raise ConfigError(f"unsupported config type for {name}")


def parse_config_text(text: str) -> ExperimentConfig:
    types = {f.name: type(f.default) for f in fields(ExperimentConfig)}
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        overrides[key] = _parse_value(key, val, types[key])
    return ExperimentConfig(**overrides)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)
