"""Model/training configuration and the flat ``key=value`` config file format."""
import dataclasses
import json
from dataclasses import dataclass

from .errors import InvalidConfig

TASKS = ("seg", "syn", "pos")


@dataclass
class ModelConfig:
    # representation sizes
    char_emb_dim: int = 300
    word_emb_dim: int = 300
    hidden: int = 250
    layers_main: int = 3
    layers_seg: int = 1
    layers_composer: int = 1
    dropout_hidden: float = 0.3
    dropout_emb: float = 0.5
    window_R: int = 10
    # task wiring
    tasks: tuple = TASKS
    feed_labels: bool = True
    feed_seg_hidden: bool = False
    hard_label_feed: bool = False
    passivization: bool = False
    char_only: bool = False
    # optimization
    epochs: int = 20
    batch_size: int = 16
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 0.0
    min_count: int = 1
    supervise: str = "center"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.tasks, str):
            self.tasks = parse_tasks(self.tasks)
        self.tasks = tuple(t for t in TASKS if t in set(self.tasks))
        self.validate()

    def validate(self):
        for name in ("char_emb_dim", "word_emb_dim", "hidden", "layers_main", "layers_seg",
                     "layers_composer", "epochs", "batch_size", "min_count"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.window_R < 0:
            raise InvalidConfig("window_R must be non-negative")
        for name in ("dropout_hidden", "dropout_emb"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1)")
        if self.supervise not in ("center", "span"):
            raise InvalidConfig("supervise must be 'center' or 'span'")

    def has(self, task):
        return task in self.tasks

    @property
    def num_tasks(self):
        """Tasks contributing a loss term, DIAC included."""
        return 1 + len(self.tasks)

    @property
    def name(self):
        """Short row label in the style of the ablation tables."""
        if not self.tasks:
            return "BASE (Char)" if self.char_only else "BASE (WordToChar)"
        if set(self.tasks) == set(TASKS):
            return "ALL"
        return "DIAC+" + "+".join(t.upper() for t in self.tasks)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["tasks"] = list(self.tasks)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def parse_tasks(text):
    items = [t.strip().lower() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in TASKS]
    if bad:
        raise InvalidConfig(f"unknown task(s) {bad}; choose from {','.join(TASKS)} (diac is implicit)")
    return tuple(items)


def _coerce(name, raw):
    fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
    if name not in fields:
        raise InvalidConfig(f"unknown config key {name!r}")
    default = fields[name].default
    if name == "tasks":
        return parse_tasks(raw)
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InvalidConfig(f"{name}: expected a boolean, got {raw!r}")
    try:
        return type(default)(raw.strip())
    except ValueError:
        raise InvalidConfig(f"{name}: cannot parse {raw!r} as {type(default).__name__}") from None


def parse_overrides(pairs):
    """``["hidden=64", "tasks=seg,syn"]`` -> typed dict."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise InvalidConfig(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = _coerce(key.strip(), value)
    return out


def read_config_file(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig(f"{path}:{lineno}: expected key=value")
            pairs.append(line)
    return parse_overrides(pairs)


def write_config_file(path, config):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in config.to_dict().items():
            if key == "tasks":
                value = ",".join(value)
            fh.write(f"{key}={value}\n")


def load_config(path=None, overrides=()):
    values = read_config_file(path) if path else {}
    values.update(parse_overrides(overrides))
    return ModelConfig(**values)
