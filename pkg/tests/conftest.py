import random

import pytest

from oot import corpus
from oot.values import F32, I32, I64, KIND_NAMES, encode_value
from oot.wat import parse_module

FIXTURES = __file__.rsplit("/", 1)[0] + "/fixtures"


def read_fixture_hex(name: str) -> bytes:
    with open(f"{FIXTURES}/{name}", encoding="utf-8") as f:
        return bytes.fromhex(f.read().strip())


@pytest.fixture(scope="session")
def countdown_module():
    return parse_module(corpus.load(corpus.COUNTDOWN))


@pytest.fixture(scope="session")
def broadcast_module():
    return parse_module(corpus.load(corpus.TEMP_BROADCAST))


@pytest.fixture(scope="session")
def tma_module():
    return parse_module(corpus.load(corpus.TEMP_MONITOR))


@pytest.fixture(scope="session")
def tma_fixed_module():
    return parse_module(corpus.load(corpus.TEMP_MONITOR_FIXED))


def snapshot(vm) -> tuple:
    """Full-state fingerprint for bit-identity comparisons."""
    return (
        vm.pc, vm.status, vm.error_counter, vm.trap,
        tuple(encode_value(v) for v in vm.value_stack),
        tuple((f.func_index, f.return_pc, f.value_stack_base,
               tuple(encode_value(v) for v in f.locals)) for f in vm.call_stack),
        tuple(encode_value(v) for v in vm.globals),
        bytes(vm.memory),
        tuple(vm.table),
        frozenset(vm.breakpoints),
    )


def execution_projection(vm) -> tuple:
    """Like snapshot, but without globals and memory (callee effects stick)."""
    return (
        vm.pc, vm.status, vm.error_counter, vm.trap,
        tuple(encode_value(v) for v in vm.value_stack),
        tuple((f.func_index, f.return_pc, f.value_stack_base,
               tuple(encode_value(v) for v in f.locals)) for f in vm.call_stack),
        tuple(vm.table),
        frozenset(vm.breakpoints),
    )


# --- random but well-typed module sources, for codec and printer properties ---

_KINDS = (I32, I64, F32)
_CONST = {I32: "i32.const", I64: "i64.const", F32: "f32.const"}
_BINARY = {  # name -> (operand kind, result kind)
    "i32.add": (I32, I32), "i32.sub": (I32, I32), "i32.eq": (I32, I32),
    "i64.sub": (I64, I64), "i64.gt_s": (I64, I32),
    "f32.add": (F32, F32), "f32.div": (F32, F32), "f32.eq": (F32, I32),
}


def _literal(rng: random.Random, kind: int) -> str:
    if kind == F32:
        return f"{rng.uniform(-100, 100):.3f}"
    lo = -(1 << 31) if kind == I32 else -(1 << 62)
    return str(rng.randint(lo, -lo))


class _BodyGen:
    def __init__(self, rng, local_kinds, globals_, sigs, own_result):
        self.rng = rng
        self.locals = local_kinds
        self.globals = globals_          # list of (kind, mutable)
        self.sigs = sigs                 # list of (params, results) per callable func
        self.own_result = own_result
        self.stack: list[int] = []

    def generate(self, depth: int, floor: int, budget: int) -> list[str]:
        rng = self.rng
        out = []
        for _ in range(budget):
            choice = rng.random()
            if choice < 0.30:
                kind = rng.choice(_KINDS)
                out.append(f"({_CONST[kind]} {_literal(rng, kind)})")
                self.stack.append(kind)
            elif choice < 0.42 and self.locals:
                idx = rng.randrange(len(self.locals))
                out.append(f"(local.get {idx})")
                self.stack.append(self.locals[idx])
            elif choice < 0.50 and len(self.stack) > floor:
                top = self.stack[-1]
                writable = [i for i, k in enumerate(self.locals) if k == top]
                if writable and rng.random() < 0.5:
                    out.append(f"(local.set {rng.choice(writable)})")
                else:
                    out.append("drop")
                self.stack.pop()
            elif choice < 0.58 and self.globals:
                idx = rng.randrange(len(self.globals))
                kind, mutable = self.globals[idx]
                if (mutable and len(self.stack) > floor
                        and self.stack[-1] == kind and rng.random() < 0.5):
                    out.append(f"(global.set {idx})")
                    self.stack.pop()
                else:
                    out.append(f"(global.get {idx})")
                    self.stack.append(kind)
            elif choice < 0.66:
                name, (operand, result) = rng.choice(sorted(_BINARY.items()))
                if (len(self.stack) >= floor + 2
                        and self.stack[-1] == operand and self.stack[-2] == operand):
                    out.append(name)
                    self.stack.pop()
                    self.stack.pop()
                    self.stack.append(result)
                else:
                    out.append("nop")
            elif choice < 0.72 and depth < 2:
                kind = rng.choice(("block", "loop"))
                entry = len(self.stack)
                inner = self.generate(depth + 1, entry, rng.randint(1, 4))
                inner += self._settle(entry, None)
                del self.stack[entry:]
                body = " ".join(inner)
                out.append(f"({kind} {body})" if body else f"({kind} nop)")
            elif choice < 0.80 and depth < 2:
                out.append(self._gen_if(depth))
            else:
                out.append("nop")
        return out

    def _gen_if(self, depth: int) -> str:
        rng = self.rng
        result = rng.choice((None, I32, I64, F32))
        cond = f"(i32.const {rng.randint(0, 1)})"
        saved = list(self.stack)
        then_items = self.generate(depth + 1, len(self.stack), rng.randint(1, 3))
        then_items += self._settle(len(saved), result)
        self.stack = list(saved)
        else_items = self.generate(depth + 1, len(self.stack), rng.randint(1, 3))
        else_items += self._settle(len(saved), result)
        self.stack = list(saved)
        if result is not None:
            self.stack.append(result)
            head = f"(if (result {KIND_NAMES[result]}) {cond}"
        else:
            head = f"(if {cond}"
        return (f"{head} (then {' '.join(then_items)}) "
                f"(else {' '.join(else_items)}))")

    def _settle(self, entry_height: int, result: int | None) -> list[str]:
        """Drops and a const so the branch leaves exactly the declared result."""
        out = ["drop"] * (len(self.stack) - entry_height)
        if result is not None:
            out.append(f"({_CONST[result]} {_literal(self.rng, result)})")
        return out

    def finish(self) -> list[str]:
        out = ["drop"] * len(self.stack)
        if self.own_result is not None:
            out.append(f"({_CONST[self.own_result]} {_literal(self.rng, self.own_result)})")
        return out


def random_module_text(rng: random.Random) -> str:
    n_types = rng.randint(1, 3)
    sigs = []
    lines = ["(module"]
    for _ in range(n_types):
        params = tuple(rng.choice(_KINDS) for _ in range(rng.randint(0, 3)))
        results = (rng.choice(_KINDS),) if rng.random() < 0.5 else ()
        sigs.append((params, results))
        p = " ".join(KIND_NAMES[k] for k in params)
        r = " ".join(KIND_NAMES[k] for k in results)
        lines.append(f"  (type (func (param {p}) (result {r})))"
                     .replace("param )", "param)").replace("result )", "result)"))

    globals_ = []
    for gi in range(rng.randint(0, 3)):
        kind = rng.choice(_KINDS)
        mutable = rng.random() < 0.7
        globals_.append((kind, mutable))
        ty = f"(mut {KIND_NAMES[kind]})" if mutable else KIND_NAMES[kind]
        lines.append(f"  (global $g{gi} {ty} "
                     f"({_CONST[kind]} {_literal(rng, kind)}))")

    n_funcs = rng.randint(1, 3)
    func_sigs = [rng.randrange(n_types) for _ in range(n_funcs)]
    for fi in range(n_funcs):
        params, results = sigs[func_sigs[fi]]
        extra = [rng.choice(_KINDS) for _ in range(rng.randint(0, 2))]
        gen = _BodyGen(rng, list(params) + extra, globals_,
                       sigs, results[0] if results else None)
        body = gen.generate(0, 0, rng.randint(2, 8)) + gen.finish()
        local_decl = ""
        if extra:
            local_decl = " (local " + " ".join(KIND_NAMES[k] for k in extra) + ")"
        lines.append(f"  (func $f{fi} (type {func_sigs[fi]}){local_decl}")
        lines.append("    " + "\n    ".join(body) + ")")

    lines.append(f'  (export "main" (func $f0))')
    if rng.random() < 0.5:
        lines.append(f"  (memory {rng.randint(0, 2)})")
    if n_funcs and rng.random() < 0.5:
        elems = " ".join(f"$f{rng.randrange(n_funcs)}"
                         for _ in range(rng.randint(1, 3)))
        lines.append(f"  (table funcref (elem {elems}))")
    lines.append(")")
    return "\n".join(lines)
