"""Channel-subset presets over the TCP montage.

Presets come in two families: the plain series ch22/ch20/ch16/ch8/ch4/ch2,
and the "+Ax" series which adds the two A1/A2-bearing differential pairs
(A1-T3 and T4-A2) back onto the preset two sizes smaller, e.g.
ch18+Ax = ch16 plus Ax. Members are kept in montage order so tensor layout
stays consistent regardless of how a preset was defined.

Constraints every preset honors: CZ-bearing coverage in all of them, and
exactly one occipital-bearing channel in ch4 and ch2.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, DataError
from .montage import DifferentialRecording, default_tcp_montage

AX_CHANNELS = ("A1-T3", "T4-A2")

_TCP_ORDER = default_tcp_montage().channel_labels
_TCP_INDEX = {lab: i for i, lab in enumerate(_TCP_ORDER)}


@dataclass(frozen=True)
class ChannelConfig:
    """Named ordered subset of montage channels."""

    name: str
    members: tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise ConfigError(f"preset {self.name!r}: empty member list")
        seen = set()
        for m in self.members:
            if m in seen:
                raise ConfigError(f"preset {self.name!r}: duplicate member {m}")
            seen.add(m)

    @property
    def includes_ax(self) -> bool:
        return any(m in AX_CHANNELS for m in self.members)

    def __len__(self) -> int:
        return len(self.members)


def _montage_sorted(members: list[str], name: str) -> tuple[str, ...]:
    for m in members:
        if m not in _TCP_INDEX:
            raise ConfigError(f"preset {name!r}: {m} is not a TCP montage channel")
    return tuple(sorted(members, key=_TCP_INDEX.__getitem__))


def _build_base_presets() -> dict[str, tuple[str, ...]]:
    ch22 = list(_TCP_ORDER)
    ch20 = [c for c in ch22 if c not in AX_CHANNELS]
    fp = {"FP1-F7", "FP2-F8", "FP1-F3", "FP2-F4"}
    ch16 = [c for c in ch20 if c not in fp]
    ch8 = ["F7-T3", "T3-T5", "F8-T4", "T4-T6", "C3-CZ", "CZ-C4", "P3-O1", "P4-O2"]
    ch4 = ["C3-CZ", "CZ-C4", "T3-T5", "T5-O1"]
    ch2 = ["C3-CZ", "P3-O1"]
    out = {}
    for name, members in [
        ("ch22", ch22), ("ch20", ch20), ("ch16", ch16),
        ("ch8", ch8), ("ch4", ch4), ("ch2", ch2),
    ]:
        out[name] = _montage_sorted(members, name)
    return out


_BASE_PRESETS = _build_base_presets()

PRESET_NAMES = tuple(
    list(_BASE_PRESETS) + [f"ch{len(_BASE_PRESETS[n]) + 2}+Ax"
                           for n in ("ch16", "ch8", "ch4", "ch2")]
)


def preset(name: str, overrides: dict[str, ChannelConfig] | None = None) -> ChannelConfig:
    """Resolve a preset by name.

    "chN+Ax" resolves to ch(N-2) plus the two Ax pairs. overrides (from a
    config file) win over the built-in registry.
    """
    if overrides and name in overrides:
        return overrides[name]
    if name in _BASE_PRESETS:
        return ChannelConfig(name, _BASE_PRESETS[name])
    if name.endswith("+Ax") and name.startswith("ch"):
        digits = name[2:-3]
        if digits.isdigit():
            base_name = f"ch{int(digits) - 2}"
            base = None
            if overrides and base_name in overrides:
                base = overrides[base_name].members
            elif base_name in _BASE_PRESETS:
                base = _BASE_PRESETS[base_name]
            if base is not None:
                members = _montage_sorted(list(base) + list(AX_CHANNELS), name)
                if len(members) != len(base) + 2:
                    raise ConfigError(
                        f"preset {name!r}: base {base_name} already holds Ax channels"
                    )
                return ChannelConfig(name, members)
    raise ConfigError(
        f"unknown preset {name!r} (expected one of {', '.join(PRESET_NAMES)} "
        f"or an override entry)"
    )


def select(rec: DifferentialRecording, cfg: ChannelConfig) -> DifferentialRecording:
    """Keep the channels named in cfg, in cfg order."""
    have = {lab.upper(): i for i, lab in enumerate(rec.labels)}
    picked = []
    for m in cfg.members:
        idx = have.get(m.upper())
        if idx is None:
            raise DataError(f"channel {m} absent from recording")
        picked.append(idx)
    return DifferentialRecording(
        labels=tuple(rec.labels[i] for i in picked),
        samples=tuple(rec.samples[i] for i in picked),
        sample_rate=rec.sample_rate,
    )


def parse_preset_overrides(text: str) -> dict[str, ChannelConfig]:
    """Parse "name: channel, channel, ..." override lines ('#' comments)."""
    out: dict[str, ChannelConfig] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(
                f"preset override line {lineno}: expected 'name: ch, ch, ...'"
            )
        name, members_text = line.split(":", 1)
        name = name.strip()
        if not name:
            raise ConfigError(f"preset override line {lineno}: empty preset name")
        members = [m.strip().upper() for m in members_text.split(",") if m.strip()]
        if not members:
            raise ConfigError(f"preset override line {lineno}: no channels listed")
        out[name] = ChannelConfig(name, tuple(members))
    return out
