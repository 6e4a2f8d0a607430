"""Access strategies for device-only functions on the reconstruction side.

Calls to imported functions on the local VM are satisfied per strategy:
``Remote`` forwards over the device link (and caches the reply),
``Cache`` replays the last remote reply for the same arguments, ``Mock``
synthesizes a fixed or zero value. Imports with no explicit strategy
default to ``Mock`` with the zero value, since the reconstruction has no
hardware behind it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (CacheEmpty, CacheMiss, Disconnected, LinkUnavailable,
                     NotAnImport, Timeout)
from .values import Value, encode_value, zero_value
from .vm.state import HostFunc, HostTrap, PrimitiveTable, Trap, TrapKind, VmState
from .vm.interp import invoke_isolated
from .wat.ast import SourceModule
from . import wire


@dataclass(frozen=True)
class Remote:
    pass


@dataclass(frozen=True)
class Cache:
    pass


@dataclass(frozen=True)
class Mock:
    value: Value | None = None


AccessStrategy = Remote | Cache | Mock

_CacheKey = tuple[int, tuple[bytes, ...]]


@dataclass
class ProxyConfig:
    """Per-function strategies plus the reply cache (last writer wins)."""

    import_indices: frozenset[int]
    result_kinds: dict[int, int | None] = field(default_factory=dict)
    strategies: dict[int, AccessStrategy] = field(default_factory=dict)
    cache: dict[_CacheKey, Value | None] = field(default_factory=dict)

    @classmethod
    def for_module(cls, m: SourceModule) -> "ProxyConfig":
        imports = frozenset(i for i, f in enumerate(m.funcs) if f.is_import)
        results = {}
        for i in imports:
            sig = m.types[m.funcs[i].type_index]
            results[i] = sig.results[0] if sig.results else None
        return cls(imports, results)

    def effective(self, fidx: int) -> AccessStrategy:
        return self.strategies.get(fidx, Mock(None))

    def has_cache_for(self, fidx: int) -> bool:
        return any(k[0] == fidx for k in self.cache)


def _cache_key(fidx: int, args: list[Value]) -> _CacheKey:
    return (fidx, tuple(encode_value(a) for a in args))


def set_strategy(cfg: ProxyConfig, fidx: int, strategy: AccessStrategy) -> ProxyConfig:
    """Install a strategy for one import; legal mid-session."""
    if fidx not in cfg.import_indices:
        raise NotAnImport(f"function {fidx} is not an import")
    if isinstance(strategy, Cache) and not cfg.has_cache_for(fidx):
        raise CacheEmpty(f"no cached reply for function {fidx} yet")
    cfg.strategies[fidx] = strategy
    return cfg


def intercept_call(vm: VmState | None, fidx: int, args: list[Value],
                   cfg: ProxyConfig, link) -> Value | Trap | None:
    """Satisfy one intercepted call per the function's current strategy."""
    strategy = cfg.effective(fidx)
    if isinstance(strategy, Remote):
        if link is None:
            raise LinkUnavailable("no device link configured")
        msg = wire.InterruptMessage(wire.PROXY_CALL,
                                    wire.pack_proxy_call(fidx, args))
        try:
            link.send_frame(msg.encode())
            while True:
                resp = wire.decode_response(link.recv_frame(timeout=30.0))
                if resp.status != wire.ST_PUSH_SESSION:
                    break
        except (Disconnected, Timeout) as e:
            raise LinkUnavailable(str(e)) from None
        if resp.status != wire.ST_OK:
            _, text = wire.parse_error(resp.payload)
            return Trap(TrapKind.HOST_ERROR, (fidx, 0),
                        f"proxy call rejected: {text}")
        result = wire.parse_proxy_reply(resp.payload)
        if not isinstance(result, Trap):
            cfg.cache[_cache_key(fidx, args)] = result
        return result
    if isinstance(strategy, Cache):
        key = _cache_key(fidx, args)
        if key not in cfg.cache:
            raise CacheMiss(f"no cached reply for function {fidx} "
                            f"with these arguments")
        return cfg.cache[key]
    # Mock
    if strategy.value is not None:
        return strategy.value
    kind = cfg.result_kinds.get(fidx)
    return zero_value(kind) if kind is not None else None


class ProxyPrimitives:
    """PrimitiveTable facade routing every import through intercept_call."""

    def __init__(self, m: SourceModule, cfg: ProxyConfig, link=None):
        self.module = m
        self.cfg = cfg
        self.link = link
        self.vm: VmState | None = None

    def _make(self, fidx: int) -> HostFunc:
        sig = self.module.types[self.module.funcs[fidx].type_index]
        results = sig.results

        def call(args: list[Value]) -> Value | None:
            try:
                result = intercept_call(self.vm, fidx, args, self.cfg, self.link)
            except (LinkUnavailable, CacheMiss) as e:
                raise HostTrap(str(e)) from None
            if isinstance(result, Trap):
                raise HostTrap(f"proxied call trapped: {result.message}")
            if result is None and results:
                # a stale void cache entry for a now-valued function
                raise HostTrap("cached reply carries no value")
            return result

        return HostFunc(sig, call)

    def table(self) -> PrimitiveTable:
        return {self.module.funcs[i].import_symbol: self._make(i)
                for i in sorted(self.cfg.import_indices)}


def make_proxy_primitives(m: SourceModule, cfg: ProxyConfig,
                          link=None) -> tuple[PrimitiveTable, ProxyPrimitives]:
    facade = ProxyPrimitives(m, cfg, link)
    return facade.table(), facade


def serve_proxy_call(remote_vm: VmState, fidx: int,
                     args: list[Value]) -> Value | Trap | None:
    """Device-side service of one proxied invocation, isolated from the app."""
    if not 0 <= fidx < len(remote_vm.module.funcs):
        return Trap(TrapKind.HOST_ERROR, remote_vm.pc, f"no function {fidx}")
    if not remote_vm.module.funcs[fidx].is_import:
        return Trap(TrapKind.HOST_ERROR, remote_vm.pc,
                    f"function {fidx} is not an imported primitive")
    return invoke_isolated(remote_vm, fidx, args)
