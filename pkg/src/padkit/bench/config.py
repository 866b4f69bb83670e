"""Flat ``key=value`` run configuration with dotted sections.

Sections are ``env.*``, ``net.*``, ``train.*`` (with ``train.sac.*`` and
``train.a2c.*``) and ``deploy.*``; top-level keys are ``kind``, ``algo`` and
``dr``.  Unknown keys are rejected by name.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Any

from padkit import envs
from padkit import policynet as pn
from padkit.numcore import ConfigurationError
from padkit.padloop import DeployConfig, TrainConfig, network_for


class ConfigKeyError(ConfigurationError):
    def __init__(self, key: str, reason: str = "unknown configuration key"):
        super().__init__(f"{reason}: {key!r}")
        self.key = key


@dataclass
class RunConfig:
    kind: str = "PointReach"
    algo: str = "sac"
    dr: bool = False
    env: envs.EnvConfig = field(default_factory=envs.EnvConfig)
    net: pn.NetworkConfig = field(default_factory=pn.desk_profile)
    train: TrainConfig = field(default_factory=TrainConfig)
    deploy: DeployConfig = field(default_factory=DeployConfig)

    @classmethod
    def for_task(cls, kind: str = "PointReach", algo: str | None = None, ssl_task: str | None = None, **kw) -> "RunConfig":
        """Consistent defaults for an environment kind (sac+idm or a2c+rotation)."""
        algo = algo or ("sac" if kind == "PointReach" else "a2c")
        ssl_task = ssl_task or ("idm" if algo == "sac" else "rotation")
        train = kw.pop("train", None) or TrainConfig(
            ssl_task=ssl_task,
            ssl_update_interval=2 if algo == "sac" else 1,
            learning_rate=1e-3 if algo == "sac" else 5e-4,
            ssl_coef=1.0 if algo == "sac" else 0.5,
        )
        train = replace(train, ssl_task=ssl_task)
        # SAC adapts at its training rate; A2C needs a much smaller step at test time
        deploy = kw.pop("deploy", None) or DeployConfig(test_learning_rate=train.learning_rate if algo == "sac" else 1e-5)
        env = kw.pop("env", None) or envs.EnvConfig()
        net = network_for(kind, algo, ssl_task, render_size=env.render_size, frame_stack=env.frame_stack)
        return cls(kind=kind, algo=algo, env=env, net=net, train=train, deploy=deploy, **kw)

    def validate(self) -> "RunConfig":
        if self.kind not in envs.KINDS:
            raise ConfigKeyError("kind", f"unknown environment kind {self.kind!r}")
        expect = network_for(self.kind, self.algo, self.net.ssl_task)
        if (self.net.action_space, self.net.action_dim, self.net.algo) != (expect.action_space, expect.action_dim, expect.algo):
            raise ConfigurationError(f"net section does not match {self.algo} on {self.kind}")
        if self.net.ssl_task != self.train.ssl_task:
            raise ConfigurationError("net.ssl_task and train.ssl_task differ")
        if self.net.render_size != self.env.render_size or self.net.frame_stack != self.env.frame_stack:
            raise ConfigurationError("net and env disagree on frame geometry")
        return self

    def with_overrides(self, **updates) -> "RunConfig":
        items = dict(parse_items(serialize(self)))
        for k, v in updates.items():
            items[k] = v if isinstance(v, str) else _format(v)
        return parse("\n".join(f"{k}={v}" for k, v in items.items()))

    def retarget(self, kind: str | None = None, algo: str | None = None, ssl_task: str | None = None) -> "RunConfig":
        """Switch task/algorithm/head, re-deriving the network's output fields."""
        items = dict(parse_items(serialize(self)))
        for k in ("net.action_space", "net.action_dim", "net.algo", "net.ssl_task"):
            items.pop(k)
        if kind and kind != self.kind:
            items["kind"] = kind
            items.pop("algo")
        if algo:
            items["algo"] = algo
        if ssl_task:
            items["train.ssl_task"] = ssl_task
        return parse("\n".join(f"{k}={v}" for k, v in items.items()))

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()


# ----------------------------------------------------------------- codec
def _format(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, text: str, default: Any, optional: bool) -> Any:
    if optional and text.lower() == "none":
        return None
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int) or (default is None and optional):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigKeyError(key, f"cannot parse {text!r} for key") from None
    return text


def _flatten(obj, prefix: str, out: list) -> None:
    for f in fields(obj):
        v = getattr(obj, f.name)
        key = prefix + f.name
        if is_dataclass(v):
            _flatten(v, key + ".", out)
        else:
            out.append((key, _format(v)))


def serialize(cfg: RunConfig) -> str:
    out: list = []
    _flatten(cfg, "", out)
    return "".join(f"{k}={v}\n" for k, v in out)


def parse_items(text: str) -> list[tuple[str, str]]:
    items = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        items.append((k.strip(), v.strip()))
    return items


def _build(template, prefix: str, items: dict):
    kwargs = {}
    for f in fields(template):
        key = prefix + f.name
        default = getattr(template, f.name)
        if is_dataclass(default):
            kwargs[f.name] = _build(default, key + ".", items)
        elif key in items:
            optional = "Optional" in str(f.type) or "None" in str(f.type)
            kwargs[f.name] = _coerce(key, items[key], default, optional)
    try:
        return replace(template, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid {prefix.rstrip('.') or 'run'} section: {exc}") from exc


def parse(text: str) -> RunConfig:
    """Parse ``serialize`` output, or any subset of keys over the task defaults."""
    items = dict(parse_items(text))
    known: list = []
    _flatten(RunConfig(), "", known)
    names = {k for k, _ in known}
    for key in items:
        if key not in names:
            raise ConfigKeyError(key)
    kind = items.get("kind", "PointReach")
    if kind not in envs.KINDS:
        raise ConfigKeyError("kind", f"unknown environment kind {kind!r}")
    ssl_task = items.get("train.ssl_task", items.get("net.ssl_task"))
    template = RunConfig.for_task(kind, items.get("algo"), ssl_task)
    return _build(template, "", items).validate()


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
