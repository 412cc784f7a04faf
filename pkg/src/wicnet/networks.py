"""Invertible network assembly.

Two architectures over the same layer vocabulary:

* Naive: a chain of coupling layers at the input width with a square
  channel-mixing WIC between each adjacent pair, closed by one
  underdetermined WIC that drops to the output width.
* WIN: a pre-extraction WIC expands the input to alpha*c channels, then N
  modules each expand to c, peel off (1-alpha)*c memory channels, and run a
  short coupling chain on the remainder.  The peeled channels rejoin before
  a small tail coupling block and the final underdetermined WIC.

The reverse pass applies each layer's exact (or least-squares) inverse in
the opposite order, re-splitting the memory channels where they were merged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .coupling import CouplingLayer, coupling_forward, coupling_reverse
from .errors import ConfigError, DimensionError
from .wic import wic_det_loss, wic_forward, wic_init, wic_reverse, wic_shift_loss

TAIL_COUPLINGS = 2


@dataclass
class WinConfig:
    """Channel plan shared by both architectures.

    alpha, c and n_wim only matter for the WIN build; the naive build uses
    couplings_total layers directly at c_i.  growth defaults to 32 for the
    paper profile and 16 for the toy profile.
    """

    c_i: int
    c_o: int
    alpha: float = 0.0
    c: int = 0
    n_wim: int = 1
    couplings_total: int = 8
    profile: str = "paper"
    growth: int = 0
    s_clamp: float = 2.0
    seed: int = 0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.profile not in ("paper", "toy"):
            raise ConfigError(f"unknown profile {self.profile!r}", key="profile")
        if self.growth == 0:
            self.growth = 32 if self.profile == "paper" else 16
        if self.c_i < 1:
            raise ConfigError("c_i must be positive", key="c_i")
        if self.c_o < 1:
            raise ConfigError("c_o must be positive", key="c_o")
        if self.couplings_total < 1:
            raise ConfigError("couplings_total must be positive",
                              key="couplings_total")

    # WIN-only channel arithmetic -------------------------------------
    def _exact_channels(self, ratio, key):
        v = ratio * self.c
        if abs(v - round(v)) > 1e-9:
            raise ConfigError(f"{key}*c = {v} is not an integer", key=key)
        return int(round(v))

    def win_channels(self):
        """(alpha*c, (1-alpha)*c, merged width) with validation."""
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha={self.alpha} outside (0,1)", key="alpha")
        if self.c < 1:
            raise ConfigError("expansion width c must be positive", key="c")
        ac = self._exact_channels(self.alpha, "alpha")
        zc = self.c - ac
        if zc < 1:
            raise ConfigError("memory width (1-alpha)*c must be >= 1", key="alpha")
        if ac < self.c_i:
            raise ConfigError(
                f"alpha*c = {ac} must be >= c_i = {self.c_i} "
                "(pre-extraction may not shrink)", key="alpha")
        if self.n_wim < 1:
            raise ConfigError("n_wim must be >= 1", key="n_wim")
        if self.couplings_total % self.n_wim != 0:
            raise ConfigError(
                f"couplings_total={self.couplings_total} not divisible by "
                f"n_wim={self.n_wim}", key="n_wim")
        merged = self.n_wim * zc + ac
        if self.c_o >= merged:
            raise ConfigError(
                f"c_o={self.c_o} must be < merged width {merged}", key="c_o")
        return ac, zc, merged


class _Entry:
    """One position in the layer list.

    kind "wic" and "coupling" carry a parametrized layer; "extract" peels
    the first ``keep`` channels onto the memory stack; "gather" concatenates
    the stack back in front of the running tensor (``sizes`` records the
    split points for the reverse pass).
    """

    __slots__ = ("kind", "layer", "keep", "sizes")

    def __init__(self, kind, layer=None, keep=None, sizes=None):
        self.kind = kind
        self.layer = layer
        self.keep = keep
        self.sizes = sizes


class Network:
    def __init__(self, cfg, arch, entries):
        self.cfg = cfg
        self.arch = arch
        self.entries = entries

    def params(self):
        """All parameters, keyed L<index>.<layer key>, in layer order."""
        out = {}
        for i, e in enumerate(self.entries):
            if e.layer is None:
                continue
            for k, v in e.layer.params().items():
                out[f"L{i:02d}.{k}"] = v
        return out

    def set_param(self, name, value):
        idx, rest = name.split(".", 1)
        self.entries[int(idx[1:])].layer.set_param(rest, value)

    def to_dtype(self, dtype):
        for e in self.entries:
            if e.layer is not None:
                e.layer.to_dtype(dtype)
        return self

    def bind(self, tape):
        """Register every parameter as a named leaf for training."""
        return {name: tape.leaf(v, name=name) for name, v in self.params().items()}


def _entry_bound(bound, idx):
    if bound is None:
        return None
    prefix = f"L{idx:02d}."
    sub = {k[len(prefix):]: v for k, v in bound.items() if k.startswith(prefix)}
    return sub or None


def build_win_naive(cfg):
    """Coupling chain at c_i with square WICs in between, under-WIC tail."""
    if cfg.c_o > cfg.c_i:
        raise ConfigError(f"naive build needs c_o <= c_i "
                          f"(got {cfg.c_o} > {cfg.c_i})", key="c_o")
    if cfg.c_i < 2:
        raise ConfigError("coupling layers need c_i >= 2", key="c_i")
    seeds = iter(np.random.SeedSequence(cfg.seed).spawn(2 * cfg.couplings_total + 1))
    entries = []
    for j in range(cfg.couplings_total):
        entries.append(_Entry("coupling", CouplingLayer(
            cfg.c_i, swap=bool(j % 2), s_clamp=cfg.s_clamp, growth=cfg.growth,
            seed=next(seeds), name=f"cpl{j}")))
        if j < cfg.couplings_total - 1:
            entries.append(_Entry("wic", wic_init(
                cfg.c_i, cfg.c_i, seed=next(seeds), name=f"mix{j}", **cfg.flags)))
    entries.append(_Entry("wic", wic_init(
        cfg.c_i, cfg.c_o, seed=next(seeds), name="tail", **cfg.flags)))
    return Network(cfg, "naive", entries)


def build_win(cfg):
    """Pre-extraction, N memory-splitting modules, merge, tail block."""
    ac, zc, merged = cfg.win_channels()
    per_module = cfg.couplings_total // cfg.n_wim
    n_layers = 1 + cfg.n_wim * (1 + per_module) + TAIL_COUPLINGS + 1
    seeds = iter(np.random.SeedSequence(cfg.seed).spawn(n_layers))
    cpl = 0
    entries = [_Entry("wic", wic_init(cfg.c_i, ac, seed=next(seeds),
                                      name="pre", **cfg.flags))]
    for l in range(cfg.n_wim):
        entries.append(_Entry("wic", wic_init(
            ac, cfg.c, seed=next(seeds), name=f"wim{l}", **cfg.flags)))
        entries.append(_Entry("extract", keep=zc))
        for _ in range(per_module):
            entries.append(_Entry("coupling", CouplingLayer(
                ac, swap=bool(cpl % 2), s_clamp=cfg.s_clamp, growth=cfg.growth,
                seed=next(seeds), name=f"cpl{cpl}")))
            cpl += 1
    entries.append(_Entry("gather", sizes=[zc] * cfg.n_wim + [ac]))
    for j in range(TAIL_COUPLINGS):
        entries.append(_Entry("coupling", CouplingLayer(
            merged, swap=bool((cpl + j) % 2), s_clamp=cfg.s_clamp,
            growth=cfg.growth, seed=next(seeds), name=f"tailcpl{j}")))
    entries.append(_Entry("wic", wic_init(
        merged, cfg.c_o, seed=next(seeds), name="tail", **cfg.flags)))
    return Network(cfg, "win", entries)


def net_forward(net, x, bound=None, trace=None, want_aux=True):
    """Run the whole chain; returns (y, aux losses).

    aux maps "L<i>.det" to each WIC's well-posedness loss and "L<i>.shift"
    to the augmented tail's shift-consistency loss.  want_aux=False skips
    them (pure inference; also lifts the shift loss's minimum plane size).
    ``trace``, if given, collects (entry index, output) pairs.
    """
    if x.shape[1] != net.cfg.c_i:
        raise DimensionError(f"input has {x.shape[1]} channels, "
                             f"expected c_i={net.cfg.c_i}")
    aux = {}
    memory = []
    for i, e in enumerate(net.entries):
        sub = _entry_bound(bound, i)
        if e.kind == "wic":
            kernel = sub["kernel"] if sub else None
            y = wic_forward(e.layer, x, kernel=kernel)
            if want_aux:
                aux[f"L{i:02d}.det"] = wic_det_loss(e.layer, kernel=kernel)
                if e.layer.augmented:
                    aux[f"L{i:02d}.shift"] = wic_shift_loss(e.layer, x, y,
                                                            kernel=kernel)
            x = y
        elif e.kind == "coupling":
            x = coupling_forward(e.layer, x, sub)
        elif e.kind == "extract":
            z, x = T.split_channels(x, e.keep)
            memory.append(z)
        elif e.kind == "gather":
            x = T.concat_channels(memory + [x])
            memory = []
        else:
            raise AssertionError(e.kind)
        if trace is not None:
            trace.append((i, x))
    return x, aux


def net_reverse(net, y, bound=None):
    """Apply each layer's reverse map in the opposite order."""
    if y.shape[1] != net.cfg.c_o:
        raise DimensionError(f"reverse input has {y.shape[1]} channels, "
                             f"expected c_o={net.cfg.c_o}")
    memory = []
    x = y
    for i in reversed(range(len(net.entries))):
        e = net.entries[i]
        sub = _entry_bound(bound, i)
        if e.kind == "wic":
            x = wic_reverse(e.layer, x, kernel=sub["kernel"] if sub else None)
        elif e.kind == "coupling":
            x = coupling_reverse(e.layer, x, sub)
        elif e.kind == "extract":
            x = T.concat_channels([memory.pop(), x])
        elif e.kind == "gather":
            parts = []
            rest = x
            for size in e.sizes[:-1]:
                part, rest = T.split_channels(rest, size)
                parts.append(part)
            memory.extend(parts)
            x = rest
        else:
            raise AssertionError(e.kind)
    return x
