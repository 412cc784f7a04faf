"""Run configuration: flat dotted key-value files.

One `key = value` pair per line, `#` starts a comment.  Every key has a
recorded default, so a config file only states what differs; the resolved
map (defaults plus overrides) is what gets hashed and embedded in run
artifacts.  Example::

    task.kind = hide
    task.t = 2
    task.squeeze = 2
    arch = naive
    train.steps = 20000
    corpus = runs/corpus
    out_dir = runs/hide-toy

The output directory can be overridden with the WICNET_OUT environment
variable without touching the file.
"""

import hashlib
import os
from dataclasses import dataclass

from .errors import ConfigError
from .networks import WinConfig
from .tasks import TaskSpec
from .training import LossWeights, TrainConfig

OUT_ENV = "WICNET_OUT"

# key -> (type tag, default).  "auto" ints resolve at build time.
SCHEMA = {
    "task.kind": ("str", "hide"),
    "task.t": ("int", 2),
    "task.s": ("int", 2),
    "task.squeeze": ("int", 0),
    "arch": ("str", "naive"),
    "net.alpha": ("float", 0.75),
    "net.c": ("int", 0),
    "net.n_wim": ("int", 2),
    "net.couplings_total": ("int", 8),
    "net.profile": ("str", "toy"),
    "net.growth": ("int", 0),
    "net.s_clamp": ("float", 2.0),
    "train.steps": ("int", 1000),
    "train.batch": ("int", 4),
    "train.lr_start": ("float", 2e-4),
    "train.lr_end": ("float", 1e-6),
    "train.augment": ("bool", True),
    "train.dtype": ("str", "f32"),
    "train.eval_every": ("int", 0),
    "train.checkpoint_every": ("int", 0),
    "loss.forward": ("float", 2.0),
    "loss.reverse": ("float", 1.0),
    "loss.det": ("float", 0.1),
    "loss.shift": ("float", 1.0),
    "corpus": ("str", ""),
    "out_dir": ("str", "runs/out"),
    "seed": ("int", 0),
}


def _parse_bool(raw, key):
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}", key=key)


def _coerce(key, raw):
    kind = SCHEMA[key][0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            return _parse_bool(raw, key)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}",
                          key=key) from exc


def parse_config(text):
    """Text to a raw key->string map; duplicate and unknown keys are errors."""
    seen = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {body!r}", key=f"line {lineno}")
        key, _, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key=key)
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key=key)
        seen[key] = raw
    return seen


def resolve(overrides):
    """Defaults plus overrides, all values typed."""
    out = {k: default for k, (_, default) in SCHEMA.items()}
    for k, raw in overrides.items():
        out[k] = _coerce(k, raw) if isinstance(raw, str) else raw
    return out


def config_hash(values):
    """Stable 16-hex digest of the resolved map (cache key for runs)."""
    lines = "\n".join(f"{k}={values[k]}" for k in sorted(values))
    return hashlib.sha256(lines.encode()).hexdigest()[:16]


def canonical_text(values):
    return "\n".join(f"{k} = {values[k]}" for k in sorted(values)) + "\n"


@dataclass
class RunConfig:
    task: TaskSpec
    arch: str
    net: WinConfig
    train: TrainConfig
    loss: LossWeights
    corpus: str
    out_dir: str
    seed: int
    resolved: dict

    @property
    def hash(self):
        return config_hash(self.resolved)


def build_run_config(values, check_paths=True):
    """Typed RunConfig from a resolved map; validates cross-field rules."""
    v = dict(values)
    task_kw = {"kind": v["task.kind"]}
    if v["task.kind"] == "hide":
        task_kw.update(t=v["task.t"], squeeze=v["task.squeeze"])
    elif v["task.kind"] == "rescale":
        task_kw.update(s=v["task.s"])
    task = TaskSpec(**task_kw)
    c_i, c_o = task.channels()

    arch = v["arch"]
    if arch not in ("naive", "win"):
        raise ConfigError(f"arch must be naive or win, got {arch!r}",
                          key="arch")
    c_exp = v["net.c"]
    if arch == "win" and c_exp == 0:
        c_exp, rem = divmod(4 * c_i, 3)
        if rem:
            raise ConfigError(
                f"net.c auto-derivation needs 3 | 4*c_i (c_i={c_i}); "
                "set net.c explicitly", key="net.c")
    net = WinConfig(c_i=c_i, c_o=c_o, alpha=v["net.alpha"], c=c_exp,
                    n_wim=v["net.n_wim"],
                    couplings_total=v["net.couplings_total"],
                    profile=v["net.profile"], growth=v["net.growth"],
                    s_clamp=v["net.s_clamp"], seed=v["seed"])
    if arch == "win":
        net.win_channels()
    train = TrainConfig(steps=v["train.steps"], batch=v["train.batch"],
                        lr_start=v["train.lr_start"], lr_end=v["train.lr_end"],
                        seed=v["seed"], augment=v["train.augment"],
                        dtype=v["train.dtype"],
                        eval_every=v["train.eval_every"],
                        checkpoint_every=v["train.checkpoint_every"])
    loss = LossWeights(forward=v["loss.forward"], reverse=v["loss.reverse"],
                       det=v["loss.det"], shift=v["loss.shift"])

    corpus = v["corpus"]
    if check_paths:
        if not corpus:
            raise ConfigError("corpus path is required", key="corpus")
        if not os.path.isdir(corpus):
            raise ConfigError(f"corpus directory {corpus!r} does not exist",
                              key="corpus")
    out_dir = os.environ.get(OUT_ENV) or v["out_dir"]
    return RunConfig(task=task, arch=arch, net=net, train=train, loss=loss,
                     corpus=corpus, out_dir=out_dir, seed=v["seed"],
                     resolved=v)


def load_run_config(path, check_paths=True):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return build_run_config(resolve(parse_config(text)),
                            check_paths=check_paths)
