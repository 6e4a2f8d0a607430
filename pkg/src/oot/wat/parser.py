"""Text frontend for the supported WAT subset.

Grammar (s-expressions): ``module``, ``type``, ``func``, ``param``,
``result``, ``local``, ``export``, ``import``, ``memory``,
``table``+``elem``, ``global`` (with ``mut``), folded or plain
instructions from the opcode table in :mod:`.ast`, and folded
``if``/``then``/``else``, ``loop``, ``block`` control. Anything else is a
``ParseError``. Function signatures must be given with ``(type ...)``
uses; control is lowered to absolute jump targets here so downstream
consumers only ever see flat bodies.
"""

from __future__ import annotations

from ..errors import ParseError, ResolveError
from ..values import (F32, F64, I32, I64, KIND_BY_NAME, Value, round_f32,
                      wrap_i32, wrap_i64)
from .ast import (BLOCK, BR, CALL, ELSE, END, F32_CONST, GLOBAL_GET,
                  GLOBAL_SET, I32_CONST, I64_CONST, IF, IMMEDIATE, LOCAL_GET,
                  LOCAL_SET, LOOP, OP_BY_NAME, FuncDef, Instr, SourceModule,
                  TypeSig, build_line_table)


class _Atom:
    __slots__ = ("text", "line")

    def __init__(self, text, line):
        self.text = text
        self.line = line


class _Str:
    __slots__ = ("text", "line")

    def __init__(self, text, line):
        self.text = text
        self.line = line


class _List:
    __slots__ = ("items", "line", "end_line")

    def __init__(self, items, line, end_line):
        self.items = items
        self.line = line
        self.end_line = end_line

    def head(self) -> str | None:
        if self.items and isinstance(self.items[0], _Atom):
            return self.items[0].text
        return None


def _tokenize(text: str):
    tokens = []
    line = 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
        elif c in " \t\r":
            i += 1
        elif c == ";" and i + 1 < n and text[i + 1] == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "(" and i + 1 < n and text[i + 1] == ";":
            depth = 1
            i += 2
            while i < n and depth:
                if text[i] == "\n":
                    line += 1
                elif text[i] == "(" and i + 1 < n and text[i + 1] == ";":
                    depth += 1
                    i += 1
                elif text[i] == ";" and i + 1 < n and text[i + 1] == ")":
                    depth -= 1
                    i += 1
                i += 1
            if depth:
                raise ParseError(line, "unterminated block comment")
        elif c == "(":
            tokens.append(("(", None, line))
            i += 1
        elif c == ")":
            tokens.append((")", None, line))
            i += 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] not in '"\n':
                j += 1
            if j >= n or text[j] != '"':
                raise ParseError(line, "unterminated string")
            tokens.append(("str", text[i + 1:j], line))
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in ' \t\r\n();"':
                j += 1
            tokens.append(("atom", text[i:j], line))
            i = j
    return tokens


def _read_sexprs(text: str) -> list:
    tokens = _tokenize(text)
    stack = [[]]
    open_lines = []
    for kind, payload, line in tokens:
        if kind == "(":
            stack.append([])
            open_lines.append(line)
        elif kind == ")":
            if len(stack) == 1:
                raise ParseError(line, "unbalanced ')'")
            items = stack.pop()
            node = _List(items, open_lines.pop(), line)
            stack[-1].append(node)
        elif kind == "str":
            stack[-1].append(_Str(payload, line))
        else:
            stack[-1].append(_Atom(payload, line))
    if len(stack) != 1:
        raise ParseError(open_lines[-1], "unclosed '('")
    return stack[0]


def _expect_atom(node, what: str) -> _Atom:
    if not isinstance(node, _Atom):
        line = getattr(node, "line", 0)
        raise ParseError(line, f"expected {what}")
    return node


def _parse_kind(atom: _Atom) -> int:
    kind = KIND_BY_NAME.get(atom.text)
    if kind is None:
        raise ParseError(atom.line, f"unknown value kind '{atom.text}'")
    return kind


def _parse_int_literal(atom: _Atom, lo: int, hi: int, wrap) -> int:
    text = atom.text
    try:
        n = int(text, 0)
    except ValueError:
        raise ParseError(atom.line, f"bad integer literal '{text}'") from None
    if not lo <= n <= hi:
        raise ParseError(atom.line, f"integer literal '{text}' out of range")
    return wrap(n)


def _parse_f32_literal(atom: _Atom) -> float:
    try:
        return round_f32(float(atom.text))
    except ValueError:
        raise ParseError(atom.line, f"bad float literal '{atom.text}'") from None


class _Names:
    """One name space: $sym -> index, with numeric references allowed."""

    def __init__(self, what: str):
        self.what = what
        self.by_name: dict[str, int] = {}
        self.count = 0

    def declare(self, name: str | None, line: int) -> int:
        idx = self.count
        if name is not None:
            if name in self.by_name:
                raise ParseError(line, f"duplicate {self.what} name ${name}")
            self.by_name[name] = idx
        self.count += 1
        return idx

    def resolve(self, atom: _Atom) -> int:
        text = atom.text
        if text.startswith("$"):
            idx = self.by_name.get(text[1:])
            if idx is None:
                raise ResolveError(f"line {atom.line}: unknown {self.what} {text}")
            return idx
        try:
            idx = int(text)
        except ValueError:
            raise ParseError(atom.line, f"bad {self.what} reference '{text}'") from None
        if not 0 <= idx < self.count:
            raise ResolveError(f"line {atom.line}: {self.what} index {idx} out of range")
        return idx


def _opt_name(items: list, pos: int) -> tuple[str | None, int]:
    if pos < len(items) and isinstance(items[pos], _Atom) and items[pos].text.startswith("$"):
        return items[pos].text[1:], pos + 1
    return None, pos


def _parse_typesig(node: _List) -> TypeSig:
    # (func (param k*)* (result k?)*)
    if node.head() != "func":
        raise ParseError(node.line, "type must wrap a (func ...) form")
    params: list[int] = []
    results: list[int] = []
    seen_result = False
    for item in node.items[1:]:
        if not isinstance(item, _List):
            raise ParseError(getattr(item, "line", node.line), "bad item in func type")
        head = item.head()
        if head == "param":
            if seen_result:
                raise ParseError(item.line, "param clause after result clause")
            for a in item.items[1:]:
                params.append(_parse_kind(_expect_atom(a, "value kind")))
        elif head == "result":
            seen_result = True
            for a in item.items[1:]:
                results.append(_parse_kind(_expect_atom(a, "value kind")))
        else:
            raise ParseError(item.line, f"unexpected '{head}' in func type")
    if len(results) > 1:
        raise ParseError(node.line, "at most one result is supported")
    return TypeSig(tuple(params), tuple(results))


class _FuncBodyParser:
    def __init__(self, parser: "_ModuleParser", local_kinds: list[int],
                 local_names: dict[str, int]):
        self.p = parser
        self.out: list[Instr] = []
        self.locals = local_kinds
        self.local_names = local_names
        # innermost-last stack of (label name or None, kind, loop target
        # or list of br indices to backpatch)
        self.labels: list[tuple[str | None, str, object]] = []

    def _resolve_local(self, atom: _Atom) -> int:
        text = atom.text
        if text.startswith("$"):
            idx = self.local_names.get(text[1:])
            if idx is None:
                raise ResolveError(f"line {atom.line}: unknown local {text}")
            return idx
        try:
            idx = int(text)
        except ValueError:
            raise ParseError(atom.line, f"bad local reference '{text}'") from None
        if not 0 <= idx < len(self.locals):
            raise ResolveError(f"line {atom.line}: local index {idx} out of range")
        return idx

    def _resolve_label(self, atom: _Atom) -> int:
        """Label reference -> position in self.labels (innermost = last)."""
        text = atom.text
        if text.startswith("$"):
            for depth, (name, _, _) in enumerate(reversed(self.labels)):
                if name == text[1:]:
                    return len(self.labels) - 1 - depth
            raise ResolveError(f"line {atom.line}: unknown label {text}")
        try:
            depth = int(text)
        except ValueError:
            raise ParseError(atom.line, f"bad label reference '{text}'") from None
        if not 0 <= depth < len(self.labels):
            raise ResolveError(f"line {atom.line}: label depth {depth} out of range")
        return len(self.labels) - 1 - depth

    def _immediate(self, op: int, atom: _Atom):
        shape = IMMEDIATE[op]
        if shape == "i32":
            return _parse_int_literal(atom, -(1 << 31), (1 << 32) - 1, wrap_i32)
        if shape == "i64":
            return _parse_int_literal(atom, -(1 << 63), (1 << 64) - 1, wrap_i64)
        if shape == "f32":
            return _parse_f32_literal(atom)
        # u32 family: resolution depends on the opcode
        if op == CALL:
            return self.p.funcs.resolve(atom)
        if op in (LOCAL_GET, LOCAL_SET):
            return self._resolve_local(atom)
        if op in (GLOBAL_GET, GLOBAL_SET):
            return self.p.globals_ns.resolve(atom)
        raise AssertionError("unreachable immediate shape")

    def emit(self, op: int, imm=None, line: int = 0) -> int:
        self.out.append(Instr(op, imm, line))
        return len(self.out) - 1

    def lower_items(self, items: list) -> None:
        i = 0
        n = len(items)
        while i < n:
            item = items[i]
            if isinstance(item, _Atom):
                op = OP_BY_NAME.get(item.text)
                if op is None:
                    raise ParseError(item.line, f"unknown instruction '{item.text}'")
                if op in (BLOCK, LOOP, IF, ELSE, END):
                    raise ParseError(item.line, f"'{item.text}' must be folded")
                if op == BR:
                    if i + 1 >= n:
                        raise ParseError(item.line, "br needs a label")
                    self._emit_br(_expect_atom(items[i + 1], "label"), item.line)
                    i += 2
                elif op in IMMEDIATE:
                    if i + 1 >= n:
                        raise ParseError(item.line, f"'{item.text}' needs an immediate")
                    imm = self._immediate(op, _expect_atom(items[i + 1], "immediate"))
                    self.emit(op, imm, item.line)
                    i += 2
                else:
                    self.emit(op, None, item.line)
                    i += 1
            elif isinstance(item, _List):
                self.lower_folded(item)
                i += 1
            else:
                raise ParseError(item.line, "string not allowed in function body")

    def _emit_br(self, label_atom: _Atom, line: int) -> None:
        pos = self._resolve_label(label_atom)
        name, kind, target = self.labels[pos]
        idx = self.emit(BR, None, line)
        if kind == "loop":
            self.out[idx].imm = target
        else:
            target.append(idx)  # backpatched when the block closes

    def lower_folded(self, node: _List) -> None:
        head = node.head()
        if head is None:
            raise ParseError(node.line, "empty expression")
        if head == "if":
            self._lower_if(node)
            return
        if head in ("block", "loop"):
            self._lower_block(node, head)
            return
        if head in ("then", "else"):
            raise ParseError(node.line, f"'{head}' outside if")
        op = OP_BY_NAME.get(head)
        if op is None:
            raise ParseError(node.line, f"unknown instruction '{head}'")
        if op in (BR,):
            if len(node.items) != 2:
                raise ParseError(node.line, "br takes exactly one label")
            self._emit_br(_expect_atom(node.items[1], "label"), node.line)
            return
        operands_start = 1
        imm = None
        if op in IMMEDIATE:
            if len(node.items) < 2:
                raise ParseError(node.line, f"'{head}' needs an immediate")
            imm = self._immediate(op, _expect_atom(node.items[1], "immediate"))
            operands_start = 2
        # folded operands evaluate before the head instruction
        for operand in node.items[operands_start:]:
            if not isinstance(operand, _List):
                raise ParseError(getattr(operand, "line", node.line),
                                 f"unexpected token in folded '{head}'")
            self.lower_folded(operand)
        self.emit(op, imm, node.line)

    def _lower_block(self, node: _List, kind: str) -> None:
        name, pos = _opt_name(node.items, 1)
        start = self.emit(LOOP if kind == "loop" else BLOCK, None, node.line)
        if kind == "loop":
            self.labels.append((name, "loop", start))
        else:
            self.labels.append((name, "block", []))
        self.lower_items(node.items[pos:])
        _, _, target = self.labels.pop()
        end_idx = self.emit(END, None, node.end_line)
        if kind == "block":
            for br_idx in target:
                self.out[br_idx].imm = end_idx + 1

    def _lower_if(self, node: _List) -> None:
        result_kind = None
        then_node = else_node = None
        cond_exprs = []
        for item in node.items[1:]:
            if isinstance(item, _List) and item.head() == "result":
                if len(item.items) != 2:
                    raise ParseError(item.line, "if result clause takes one kind")
                result_kind = _parse_kind(_expect_atom(item.items[1], "value kind"))
            elif isinstance(item, _List) and item.head() == "then":
                then_node = item
            elif isinstance(item, _List) and item.head() == "else":
                else_node = item
            elif isinstance(item, _List) and then_node is None:
                cond_exprs.append(item)
            else:
                raise ParseError(getattr(item, "line", node.line), "malformed if")
        if then_node is None:
            raise ParseError(node.line, "if needs a (then ...) branch")
        for expr in cond_exprs:
            self.lower_folded(expr)
        if_idx = self.emit(IF, None, node.line)
        self.labels.append((None, "block", []))
        self.lower_items(then_node.items[1:])
        if else_node is not None:
            else_idx = self.emit(ELSE, None, else_node.line)
            self.out[if_idx].imm = (else_idx + 1, result_kind)
            self.lower_items(else_node.items[1:])
            _, _, pending = self.labels.pop()
            end_idx = self.emit(END, None, node.end_line)
            self.out[else_idx].imm = end_idx
        else:
            _, _, pending = self.labels.pop()
            end_idx = self.emit(END, None, node.end_line)
            self.out[if_idx].imm = (end_idx, result_kind)
        for br_idx in pending:
            self.out[br_idx].imm = end_idx + 1


class _ModuleParser:
    def __init__(self):
        self.types = _Names("type")
        self.funcs = _Names("function")
        self.globals_ns = _Names("global")
        self.type_sigs: list[TypeSig] = []

    def parse(self, text: str) -> SourceModule:
        top = _read_sexprs(text)
        if len(top) != 1 or not isinstance(top[0], _List) or top[0].head() != "module":
            line = top[0].line if top else 1
            raise ParseError(line, "expected a single (module ...) form")
        fields = top[0].items[1:]

        by_kind: dict[str, list[_List]] = {}
        for f in fields:
            if not isinstance(f, _List) or f.head() is None:
                raise ParseError(getattr(f, "line", 1), "bad module field")
            by_kind.setdefault(f.head(), []).append(f)
        known = {"type", "import", "func", "export", "global", "memory", "table"}
        for kind in by_kind:
            if kind not in known:
                raise ParseError(by_kind[kind][0].line, f"unsupported module field '{kind}'")

        m = SourceModule()

        for node in by_kind.get("type", []):
            name, pos = _opt_name(node.items, 1)
            if pos >= len(node.items) or not isinstance(node.items[pos], _List):
                raise ParseError(node.line, "type needs a (func ...) form")
            self.types.declare(name, node.line)
            self.type_sigs.append(_parse_typesig(node.items[pos]))
        m.types = self.type_sigs

        # Function index space: imports first, then defined functions.
        imports: list[tuple[_List, str, str, _List]] = []
        for node in by_kind.get("import", []):
            items = node.items
            if (len(items) != 4 or not isinstance(items[1], _Str)
                    or not isinstance(items[2], _Str) or not isinstance(items[3], _List)
                    or items[3].head() != "func"):
                raise ParseError(node.line, "import must be (import \"ns\" \"name\" (func ...))")
            imports.append((node, items[1].text, items[2].text, items[3]))
        defined = by_kind.get("func", [])

        import_descs = []
        for node, ns, sym, funcform in imports:
            name, pos = _opt_name(funcform.items, 1)
            self.funcs.declare(name, node.line)
            import_descs.append((name, ns, sym, funcform, pos))
        defined_descs = []
        for node in defined:
            name, pos = _opt_name(node.items, 1)
            self.funcs.declare(name, node.line)
            defined_descs.append((name, node, pos))

        for node in by_kind.get("global", []):
            self._parse_global(node, m)

        for name, ns, sym, funcform, pos in import_descs:
            type_index = self._parse_type_use(funcform, pos)
            m.funcs.append(FuncDef(name or "", type_index, (), [], True, (ns, sym)))
        for name, node, pos in defined_descs:
            m.funcs.append(self._parse_func(name or "", node, pos))

        for node in by_kind.get("memory", []):
            if m.memory_pages or len(node.items) != 2:
                raise ParseError(node.line, "exactly one (memory N) is supported")
            pages = _parse_int_literal(_expect_atom(node.items[1], "page count"),
                                       0, 1 << 16, lambda n: n)
            m.memory_pages = pages

        for node in by_kind.get("table", []):
            if m.table:
                raise ParseError(node.line, "only one table is supported")
            items = node.items
            if (len(items) != 3 or not isinstance(items[1], _Atom)
                    or items[1].text != "funcref" or not isinstance(items[2], _List)
                    or items[2].head() != "elem"):
                raise ParseError(node.line, "table must be (table funcref (elem ...))")
            m.table = [self.funcs.resolve(_expect_atom(e, "function reference"))
                       for e in items[2].items[1:]]

        for node in by_kind.get("export", []):
            items = node.items
            if (len(items) != 3 or not isinstance(items[1], _Str)
                    or not isinstance(items[2], _List) or items[2].head() != "func"
                    or len(items[2].items) != 2):
                raise ParseError(node.line, "export must be (export \"name\" (func ref))")
            sym = items[1].text
            if sym in m.exports:
                raise ParseError(node.line, f"duplicate export '{sym}'")
            m.exports[sym] = self.funcs.resolve(_expect_atom(items[2].items[1], "function reference"))

        build_line_table(m)
        return m

    def _parse_type_use(self, funcform: _List, pos: int) -> int:
        if pos >= len(funcform.items):
            raise ParseError(funcform.line, "function needs a (type ...) use")
        use = funcform.items[pos]
        if not isinstance(use, _List) or use.head() != "type" or len(use.items) != 2:
            raise ParseError(funcform.line, "function signature must be a (type ...) use")
        idx = self.types.resolve(_expect_atom(use.items[1], "type reference"))
        return idx

    def _parse_global(self, node: _List, m: SourceModule) -> None:
        name, pos = _opt_name(node.items, 1)
        items = node.items
        if len(items) != pos + 2:
            raise ParseError(node.line, "global must be (global $n? type (init))")
        type_item = items[pos]
        mutable = False
        if isinstance(type_item, _List):
            if type_item.head() != "mut" or len(type_item.items) != 2:
                raise ParseError(node.line, "bad global type")
            mutable = True
            kind = _parse_kind(_expect_atom(type_item.items[1], "value kind"))
        else:
            kind = _parse_kind(_expect_atom(type_item, "value kind"))
        init_node = items[pos + 1]
        if not isinstance(init_node, _List) or len(init_node.items) != 2:
            raise ParseError(node.line, "global init must be a const expression")
        init_op = OP_BY_NAME.get(init_node.head() or "")
        lit = _expect_atom(init_node.items[1], "literal")
        if init_op == I32_CONST:
            init = Value(I32, _parse_int_literal(lit, -(1 << 31), (1 << 32) - 1, wrap_i32))
        elif init_op == I64_CONST:
            init = Value(I64, _parse_int_literal(lit, -(1 << 63), (1 << 64) - 1, wrap_i64))
        elif init_op == F32_CONST:
            init = Value(F32, _parse_f32_literal(lit))
        else:
            raise ParseError(init_node.line, "unsupported global init expression")
        if init.kind != kind:
            raise ParseError(node.line, "global init kind does not match declaration")
        self.globals_ns.declare(name, node.line)
        m.globals.append((kind, mutable, init))
        m.global_names.append(name or "")

    def _parse_func(self, name: str, node: _List, pos: int) -> FuncDef:
        type_index = self._parse_type_use(node, pos)
        pos += 1
        sig = self.type_sigs[type_index]
        local_kinds: list[int] = list(sig.params)
        local_names: dict[str, int] = {}
        declared: list[int] = []
        while pos < len(node.items):
            item = node.items[pos]
            if isinstance(item, _List) and item.head() == "local":
                lname, lpos = _opt_name(item.items, 1)
                kinds = [_parse_kind(_expect_atom(a, "value kind"))
                         for a in item.items[lpos:]]
                if lname is not None:
                    if len(kinds) != 1:
                        raise ParseError(item.line, "named local declares exactly one kind")
                    if lname in local_names:
                        raise ParseError(item.line, f"duplicate local name ${lname}")
                    local_names[lname] = len(local_kinds)
                local_kinds.extend(kinds)
                declared.extend(kinds)
                pos += 1
            else:
                break
        body_parser = _FuncBodyParser(self, local_kinds, local_names)
        body_parser.lower_items(node.items[pos:])
        return FuncDef(name, type_index, tuple(declared), body_parser.out)


def parse_module(text: str) -> SourceModule:
    """Parse WAT-subset source into a lowered module."""
    return _ModuleParser().parse(text)
