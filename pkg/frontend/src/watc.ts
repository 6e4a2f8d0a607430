/** Text frontend and binary-module encoder.
 *
 * Mirrors the VM side byte for byte: same subset grammar, same lowering
 * of structured control to absolute jump targets, same source-line
 * bookkeeping, same section layout. The corpus blob fixtures pin the
 * equivalence.
 */

import { F32, I32, I64, KIND_BY_NAME } from "./values.js";

// Instruction opcodes (blob encoding bytes).
export const NOP = 0x00, DROP = 0x01, RETURN = 0x02, END = 0x03;
export const BLOCK = 0x04, LOOP = 0x05, IF = 0x06, ELSE = 0x07, BR = 0x08;
export const CALL = 0x09;
export const I32_CONST = 0x0a, I64_CONST = 0x0b, F32_CONST = 0x0c;
export const LOCAL_GET = 0x0d, LOCAL_SET = 0x0e;
export const GLOBAL_GET = 0x0f, GLOBAL_SET = 0x10;

const OP_BY_NAME: Record<string, number> = {
  nop: NOP, drop: DROP, return: RETURN,
  br: BR, call: CALL,
  "i32.const": I32_CONST, "i64.const": I64_CONST, "f32.const": F32_CONST,
  "local.get": LOCAL_GET, "local.set": LOCAL_SET,
  "global.get": GLOBAL_GET, "global.set": GLOBAL_SET,
  "i32.add": 0x11, "i32.sub": 0x12, "i32.eq": 0x13,
  "i64.sub": 0x14, "i64.gt_s": 0x15,
  "f32.add": 0x16, "f32.div": 0x17, "f32.eq": 0x18,
  "i32.load": 0x19, "i32.store": 0x1a,
  block: BLOCK, loop: LOOP, if: IF, else: ELSE, end: END,
};

type ImmShape = "u32" | "i32" | "i64" | "f32";
const IMMEDIATE: Record<number, ImmShape> = {
  [IF]: "u32", [ELSE]: "u32", [BR]: "u32", [CALL]: "u32",
  [I32_CONST]: "i32", [I64_CONST]: "i64", [F32_CONST]: "f32",
  [LOCAL_GET]: "u32", [LOCAL_SET]: "u32",
  [GLOBAL_GET]: "u32", [GLOBAL_SET]: "u32",
};

export interface Instr {
  op: number;
  imm: number | bigint | [number, number | null] | null;
  line: number;
}

export interface TypeSig {
  params: number[];
  results: number[];
}

export interface FuncDef {
  name: string;
  typeIndex: number;
  locals: number[];
  body: Instr[];
  isImport: boolean;
  importSymbol: [string, string] | null;
}

export interface Module {
  types: TypeSig[];
  funcs: FuncDef[];
  globals: { kind: number; mutable: boolean; init: number | bigint }[];
  globalNames: string[];
  table: number[];
  memoryPages: number;
  exports: Map<string, number>;
  lineTable: Map<number, [number, number][]>;
}

export class CompileError extends Error {
  constructor(public line: number, message: string) {
    super(`line ${line}: ${message}`);
  }
}

// --- s-expressions ---

type Node = Atom | Str | List;
interface Atom { t: "atom"; text: string; line: number }
interface Str { t: "str"; text: string; line: number }
interface List { t: "list"; items: Node[]; line: number; endLine: number }

function tokenize(text: string): [string, string | null, number][] {
  const tokens: [string, string | null, number][] = [];
  let line = 1;
  let i = 0;
  const n = text.length;
  while (i < n) {
    const c = text[i];
    if (c === "\n") { line++; i++; }
    else if (c === " " || c === "\t" || c === "\r") i++;
    else if (c === ";" && text[i + 1] === ";") {
      while (i < n && text[i] !== "\n") i++;
    } else if (c === "(" && text[i + 1] === ";") {
      let depth = 1;
      i += 2;
      while (i < n && depth > 0) {
        if (text[i] === "\n") line++;
        else if (text[i] === "(" && text[i + 1] === ";") { depth++; i++; }
        else if (text[i] === ";" && text[i + 1] === ")") { depth--; i++; }
        i++;
      }
      if (depth) throw new CompileError(line, "unterminated block comment");
    } else if (c === "(") { tokens.push(["(", null, line]); i++; }
    else if (c === ")") { tokens.push([")", null, line]); i++; }
    else if (c === '"') {
      let j = i + 1;
      while (j < n && text[j] !== '"' && text[j] !== "\n") j++;
      if (text[j] !== '"') throw new CompileError(line, "unterminated string");
      tokens.push(["str", text.slice(i + 1, j), line]);
      i = j + 1;
    } else {
      let j = i;
      while (j < n && !' \t\r\n();"'.includes(text[j])) j++;
      tokens.push(["atom", text.slice(i, j), line]);
      i = j;
    }
  }
  return tokens;
}

function readSexprs(text: string): Node[] {
  const stack: Node[][] = [[]];
  const openLines: number[] = [];
  for (const [kind, payload, line] of tokenize(text)) {
    if (kind === "(") {
      stack.push([]);
      openLines.push(line);
    } else if (kind === ")") {
      if (stack.length === 1) throw new CompileError(line, "unbalanced ')'");
      const items = stack.pop()!;
      stack[stack.length - 1].push({
        t: "list", items, line: openLines.pop()!, endLine: line,
      });
    } else if (kind === "str") {
      stack[stack.length - 1].push({ t: "str", text: payload!, line });
    } else {
      stack[stack.length - 1].push({ t: "atom", text: payload!, line });
    }
  }
  if (stack.length !== 1) {
    throw new CompileError(openLines[openLines.length - 1], "unclosed '('");
  }
  return stack[0];
}

const head = (node: Node): string | null =>
  node.t === "list" && node.items[0]?.t === "atom" ? node.items[0].text : null;

function parseKind(node: Node): number {
  if (node.t !== "atom" || !(node.text in KIND_BY_NAME)) {
    throw new CompileError(node.line, "expected a value kind");
  }
  return KIND_BY_NAME[node.text];
}

function intLiteral(node: Node, bits: 32 | 64): number | bigint {
  if (node.t !== "atom" || !/^[+-]?\d+$/.test(node.text)) {
    throw new CompileError(node.line, `bad integer literal`);
  }
  const v = BigInt(node.text);
  const max = bits === 32 ? (1n << 32n) - 1n : (1n << 64n) - 1n;
  const min = bits === 32 ? -(1n << 31n) : -(1n << 63n);
  if (v < min || v > max) throw new CompileError(node.line, "literal out of range");
  if (bits === 32) return Number(BigInt.asIntN(32, v));
  return BigInt.asIntN(64, v);
}

function f32Literal(node: Node): number {
  if (node.t !== "atom") throw new CompileError(node.line, "bad float literal");
  const x = Number.parseFloat(node.text);
  if (Number.isNaN(x) && node.text !== "nan") {
    throw new CompileError(node.line, "bad float literal");
  }
  return Math.fround(x);
}

class Names {
  byName = new Map<string, number>();
  count = 0;

  constructor(private what: string) {}

  declare(name: string | null, line: number): number {
    const idx = this.count++;
    if (name !== null) {
      if (this.byName.has(name)) {
        throw new CompileError(line, `duplicate ${this.what} name $${name}`);
      }
      this.byName.set(name, idx);
    }
    return idx;
  }

  resolve(node: Node): number {
    if (node.t !== "atom") throw new CompileError(node.line, `bad ${this.what} reference`);
    if (node.text.startsWith("$")) {
      const idx = this.byName.get(node.text.slice(1));
      if (idx === undefined) {
        throw new CompileError(node.line, `unknown ${this.what} ${node.text}`);
      }
      return idx;
    }
    const idx = Number(node.text);
    if (!Number.isInteger(idx) || idx < 0 || idx >= this.count) {
      throw new CompileError(node.line, `${this.what} index out of range`);
    }
    return idx;
  }
}

function optName(items: Node[], pos: number): [string | null, number] {
  const node = items[pos];
  if (node?.t === "atom" && node.text.startsWith("$")) {
    return [node.text.slice(1), pos + 1];
  }
  return [null, pos];
}

function parseTypeSig(node: List): TypeSig {
  if (head(node) !== "func") throw new CompileError(node.line, "type must wrap (func ...)");
  const params: number[] = [];
  const results: number[] = [];
  for (const item of node.items.slice(1)) {
    const h = head(item);
    if (h === "param") {
      for (const a of (item as List).items.slice(1)) params.push(parseKind(a));
    } else if (h === "result") {
      for (const a of (item as List).items.slice(1)) results.push(parseKind(a));
    } else {
      throw new CompileError(node.line, "unexpected clause in func type");
    }
  }
  if (results.length > 1) throw new CompileError(node.line, "at most one result");
  return { params, results };
}

type LabelEntry = [string | null, "loop" | "block", number | number[]];

class BodyParser {
  out: Instr[] = [];
  labels: LabelEntry[] = [];

  constructor(
    private funcs: Names,
    private globals: Names,
    private localKinds: number[],
    private localNames: Map<string, number>,
  ) {}

  private emit(op: number, imm: Instr["imm"], line: number): number {
    this.out.push({ op, imm, line });
    return this.out.length - 1;
  }

  private resolveLocal(node: Node): number {
    if (node.t !== "atom") throw new CompileError(node.line, "bad local reference");
    if (node.text.startsWith("$")) {
      const idx = this.localNames.get(node.text.slice(1));
      if (idx === undefined) throw new CompileError(node.line, `unknown local ${node.text}`);
      return idx;
    }
    const idx = Number(node.text);
    if (!Number.isInteger(idx) || idx < 0 || idx >= this.localKinds.length) {
      throw new CompileError(node.line, "local index out of range");
    }
    return idx;
  }

  private resolveLabel(node: Node): number {
    if (node.t !== "atom") throw new CompileError(node.line, "bad label reference");
    if (node.text.startsWith("$")) {
      const name = node.text.slice(1);
      for (let d = this.labels.length - 1; d >= 0; d--) {
        if (this.labels[d][0] === name) return d;
      }
      throw new CompileError(node.line, `unknown label ${node.text}`);
    }
    const depth = Number(node.text);
    if (!Number.isInteger(depth) || depth < 0 || depth >= this.labels.length) {
      throw new CompileError(node.line, "label depth out of range");
    }
    return this.labels.length - 1 - depth;
  }

  private immediate(op: number, node: Node): Instr["imm"] {
    const shape = IMMEDIATE[op];
    if (shape === "i32") return intLiteral(node, 32);
    if (shape === "i64") return intLiteral(node, 64);
    if (shape === "f32") return f32Literal(node);
    if (op === CALL) return this.funcs.resolve(node);
    if (op === LOCAL_GET || op === LOCAL_SET) return this.resolveLocal(node);
    return this.globals.resolve(node);
  }

  private emitBr(labelNode: Node, line: number): void {
    const pos = this.resolveLabel(labelNode);
    const [, kind, target] = this.labels[pos];
    const idx = this.emit(BR, null, line);
    if (kind === "loop") this.out[idx].imm = target as number;
    else (target as number[]).push(idx);
  }

  lowerItems(items: Node[]): void {
    let i = 0;
    while (i < items.length) {
      const item = items[i];
      if (item.t === "atom") {
        const op = OP_BY_NAME[item.text];
        if (op === undefined) throw new CompileError(item.line, `unknown instruction '${item.text}'`);
        if (op === BLOCK || op === LOOP || op === IF || op === ELSE || op === END) {
          throw new CompileError(item.line, `'${item.text}' must be folded`);
        }
        if (op === BR) {
          if (i + 1 >= items.length) throw new CompileError(item.line, "br needs a label");
          this.emitBr(items[i + 1], item.line);
          i += 2;
        } else if (op in IMMEDIATE) {
          if (i + 1 >= items.length) throw new CompileError(item.line, "missing immediate");
          this.emit(op, this.immediate(op, items[i + 1]), item.line);
          i += 2;
        } else {
          this.emit(op, null, item.line);
          i += 1;
        }
      } else if (item.t === "list") {
        this.lowerFolded(item);
        i += 1;
      } else {
        throw new CompileError(item.line, "string not allowed in a body");
      }
    }
  }

  lowerFolded(node: List): void {
    const h = head(node);
    if (h === null) throw new CompileError(node.line, "empty expression");
    if (h === "if") return this.lowerIf(node);
    if (h === "block" || h === "loop") return this.lowerBlock(node, h);
    if (h === "then" || h === "else") {
      throw new CompileError(node.line, `'${h}' outside if`);
    }
    const op = OP_BY_NAME[h];
    if (op === undefined) throw new CompileError(node.line, `unknown instruction '${h}'`);
    if (op === BR) {
      if (node.items.length !== 2) throw new CompileError(node.line, "br takes one label");
      this.emitBr(node.items[1], node.line);
      return;
    }
    let operandsStart = 1;
    let imm: Instr["imm"] = null;
    if (op in IMMEDIATE) {
      if (node.items.length < 2) throw new CompileError(node.line, "missing immediate");
      imm = this.immediate(op, node.items[1]);
      operandsStart = 2;
    }
    for (const operand of node.items.slice(operandsStart)) {
      if (operand.t !== "list") {
        throw new CompileError(node.line, `unexpected token in folded '${h}'`);
      }
      this.lowerFolded(operand);
    }
    this.emit(op, imm, node.line);
  }

  private lowerBlock(node: List, kind: "block" | "loop"): void {
    const [name, pos] = optName(node.items, 1);
    const start = this.emit(kind === "loop" ? LOOP : BLOCK, null, node.line);
    this.labels.push(kind === "loop" ? [name, "loop", start] : [name, "block", []]);
    this.lowerItems(node.items.slice(pos));
    const [, , target] = this.labels.pop()!;
    const endIdx = this.emit(END, null, node.endLine);
    if (kind === "block") {
      for (const brIdx of target as number[]) this.out[brIdx].imm = endIdx + 1;
    }
  }

  private lowerIf(node: List): void {
    let resultKind: number | null = null;
    let thenNode: List | null = null;
    let elseNode: List | null = null;
    const condExprs: List[] = [];
    for (const item of node.items.slice(1)) {
      const h = head(item);
      if (h === "result") {
        resultKind = parseKind((item as List).items[1]);
      } else if (h === "then") {
        thenNode = item as List;
      } else if (h === "else") {
        elseNode = item as List;
      } else if (item.t === "list" && thenNode === null) {
        condExprs.push(item);
      } else {
        throw new CompileError(node.line, "malformed if");
      }
    }
    if (!thenNode) throw new CompileError(node.line, "if needs a (then ...) branch");
    for (const expr of condExprs) this.lowerFolded(expr);
    const ifIdx = this.emit(IF, null, node.line);
    this.labels.push([null, "block", []]);
    this.lowerItems(thenNode.items.slice(1));
    let endIdx: number;
    if (elseNode) {
      const elseIdx = this.emit(ELSE, null, elseNode.line);
      this.out[ifIdx].imm = [elseIdx + 1, resultKind];
      this.lowerItems(elseNode.items.slice(1));
      const [, , pending] = this.labels.pop()!;
      endIdx = this.emit(END, null, node.endLine);
      this.out[elseIdx].imm = endIdx;
      for (const brIdx of pending as number[]) this.out[brIdx].imm = endIdx + 1;
    } else {
      const [, , pending] = this.labels.pop()!;
      endIdx = this.emit(END, null, node.endLine);
      this.out[ifIdx].imm = [endIdx, resultKind];
      for (const brIdx of pending as number[]) this.out[brIdx].imm = endIdx + 1;
    }
  }
}

export function parseModule(text: string): Module {
  const top = readSexprs(text);
  if (top.length !== 1 || head(top[0]) !== "module") {
    throw new CompileError(top[0]?.line ?? 1, "expected a single (module ...) form");
  }
  const fields = (top[0] as List).items.slice(1);

  const byKind = new Map<string, List[]>();
  for (const f of fields) {
    const h = head(f);
    if (h === null) throw new CompileError((f as Node).line, "bad module field");
    if (!byKind.has(h)) byKind.set(h, []);
    byKind.get(h)!.push(f as List);
  }
  for (const kind of byKind.keys()) {
    if (!["type", "import", "func", "export", "global", "memory", "table"].includes(kind)) {
      throw new CompileError(byKind.get(kind)![0].line, `unsupported module field '${kind}'`);
    }
  }

  const types = new Names("type");
  const funcs = new Names("function");
  const globalsNs = new Names("global");

  const m: Module = {
    types: [], funcs: [], globals: [], globalNames: [], table: [],
    memoryPages: 0, exports: new Map(), lineTable: new Map(),
  };

  for (const node of byKind.get("type") ?? []) {
    const [name, pos] = optName(node.items, 1);
    types.declare(name, node.line);
    m.types.push(parseTypeSig(node.items[pos] as List));
  }

  const typeUse = (funcform: List, pos: number): number => {
    const use = funcform.items[pos];
    if (head(use) !== "type" || (use as List).items.length !== 2) {
      throw new CompileError(funcform.line, "function signature must be a (type ...) use");
    }
    return types.resolve((use as List).items[1]);
  };

  const importDescs: [string | null, string, string, List, number][] = [];
  for (const node of byKind.get("import") ?? []) {
    const [ns, sym, funcform] = [node.items[1], node.items[2], node.items[3]];
    if (node.items.length !== 4 || ns?.t !== "str" || sym?.t !== "str"
        || head(funcform) !== "func") {
      throw new CompileError(node.line, 'import must be (import "ns" "name" (func ...))');
    }
    const [name, pos] = optName((funcform as List).items, 1);
    funcs.declare(name, node.line);
    importDescs.push([name, ns.text, sym.text, funcform as List, pos]);
  }
  const definedDescs: [string | null, List, number][] = [];
  for (const node of byKind.get("func") ?? []) {
    const [name, pos] = optName(node.items, 1);
    funcs.declare(name, node.line);
    definedDescs.push([name, node, pos]);
  }

  for (const node of byKind.get("global") ?? []) {
    const [name, pos] = optName(node.items, 1);
    const typeItem = node.items[pos];
    let mutable = false;
    let kind: number;
    if (typeItem.t === "list") {
      if (head(typeItem) !== "mut") throw new CompileError(node.line, "bad global type");
      mutable = true;
      kind = parseKind(typeItem.items[1]);
    } else {
      kind = parseKind(typeItem);
    }
    const init = node.items[pos + 1];
    if (init?.t !== "list" || init.items.length !== 2) {
      throw new CompileError(node.line, "global init must be a const expression");
    }
    const initOp = OP_BY_NAME[head(init) ?? ""];
    let value: number | bigint;
    if (initOp === I32_CONST) value = intLiteral(init.items[1], 32);
    else if (initOp === I64_CONST) value = intLiteral(init.items[1], 64);
    else if (initOp === F32_CONST) value = f32Literal(init.items[1]);
    else throw new CompileError(node.line, "unsupported global init");
    const wantKind = initOp === I32_CONST ? I32 : initOp === I64_CONST ? I64 : F32;
    if (wantKind !== kind) throw new CompileError(node.line, "global init kind mismatch");
    globalsNs.declare(name, node.line);
    m.globals.push({ kind, mutable, init: value });
    m.globalNames.push(name ?? "");
  }

  for (const [name, ns, sym, funcform, pos] of importDescs) {
    m.funcs.push({
      name: name ?? "", typeIndex: typeUse(funcform, pos), locals: [],
      body: [], isImport: true, importSymbol: [ns, sym],
    });
  }
  for (const [name, node, pos] of definedDescs) {
    let p = pos;
    const typeIndex = typeUse(node, p);
    p += 1;
    const sig = m.types[typeIndex];
    const localKinds = [...sig.params];
    const localNames = new Map<string, number>();
    const declared: number[] = [];
    while (p < node.items.length && head(node.items[p]) === "local") {
      const decl = node.items[p] as List;
      const [lname, lpos] = optName(decl.items, 1);
      const kinds = decl.items.slice(lpos).map(parseKind);
      if (lname !== null) {
        if (kinds.length !== 1) throw new CompileError(decl.line, "named local declares one kind");
        localNames.set(lname, localKinds.length);
      }
      localKinds.push(...kinds);
      declared.push(...kinds);
      p += 1;
    }
    const bodyParser = new BodyParser(funcs, globalsNs, localKinds, localNames);
    bodyParser.lowerItems(node.items.slice(p));
    m.funcs.push({
      name: name ?? "", typeIndex, locals: declared, body: bodyParser.out,
      isImport: false, importSymbol: null,
    });
  }

  for (const node of byKind.get("memory") ?? []) {
    if (m.memoryPages || node.items.length !== 2) {
      throw new CompileError(node.line, "exactly one (memory N) is supported");
    }
    m.memoryPages = Number(intLiteral(node.items[1], 32));
  }

  for (const node of byKind.get("table") ?? []) {
    if (m.table.length) throw new CompileError(node.line, "only one table");
    const elem = node.items[2];
    if (node.items.length !== 3 || (node.items[1] as Atom).text !== "funcref"
        || head(elem) !== "elem") {
      throw new CompileError(node.line, "table must be (table funcref (elem ...))");
    }
    m.table = (elem as List).items.slice(1).map((e) => funcs.resolve(e));
  }

  for (const node of byKind.get("export") ?? []) {
    const sym = node.items[1];
    const funcref = node.items[2];
    if (node.items.length !== 3 || sym?.t !== "str" || head(funcref) !== "func"
        || (funcref as List).items.length !== 2) {
      throw new CompileError(node.line, 'export must be (export "name" (func ref))');
    }
    if (m.exports.has(sym.text)) throw new CompileError(node.line, `duplicate export`);
    m.exports.set(sym.text, funcs.resolve((funcref as List).items[1]));
  }

  for (let fi = 0; fi < m.funcs.length; fi++) {
    m.funcs[fi].body.forEach((ins, off) => {
      if (!m.lineTable.has(ins.line)) m.lineTable.set(ins.line, []);
      m.lineTable.get(ins.line)!.push([fi, off]);
    });
  }
  for (const locs of m.lineTable.values()) {
    locs.sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  }
  return m;
}

export function resolveBreakpoint(m: Module, line: number): [number, number] {
  const locs = m.lineTable.get(line);
  if (!locs || !locs.length) throw new Error(`no instruction on line ${line}`);
  return locs[0];
}

// --- blob encoding ---

class Writer {
  parts: Buffer[] = [];

  u8(n: number) { this.parts.push(Buffer.from([n])); }
  u16(n: number) { const b = Buffer.alloc(2); b.writeUInt16LE(n); this.parts.push(b); }
  u32(n: number) { const b = Buffer.alloc(4); b.writeUInt32LE(n >>> 0); this.parts.push(b); }
  i32(n: number) { const b = Buffer.alloc(4); b.writeInt32LE(n); this.parts.push(b); }
  i64(n: bigint) { const b = Buffer.alloc(8); b.writeBigInt64LE(n); this.parts.push(b); }
  f32(x: number) { const b = Buffer.alloc(4); b.writeFloatLE(x); this.parts.push(b); }
  raw(b: Buffer) { this.parts.push(b); }
  name(s: string) { const b = Buffer.from(s, "utf-8"); this.u16(b.length); this.raw(b); }
  value(): Buffer { return Buffer.concat(this.parts); }
}

export function encodeModule(m: Module): Buffer {
  const w = new Writer();
  w.raw(Buffer.from("OTMB", "ascii"));
  w.u8(1);

  w.u32(m.types.length);
  for (const t of m.types) {
    w.u8(t.params.length);
    w.raw(Buffer.from(t.params));
    w.u8(t.results.length);
    w.raw(Buffer.from(t.results));
  }

  w.u32(m.funcs.length);
  for (const f of m.funcs) {
    w.u8(f.isImport ? 1 : 0);
    w.name(f.name);
    w.u32(f.typeIndex);
    if (f.isImport) {
      w.name(f.importSymbol![0]);
      w.name(f.importSymbol![1]);
    } else {
      w.u32(f.locals.length);
      w.raw(Buffer.from(f.locals));
      w.u32(f.body.length);
      for (const ins of f.body) {
        w.u8(ins.op);
        const shape = IMMEDIATE[ins.op];
        if (ins.op === IF) {
          const [target, result] = ins.imm as [number, number | null];
          w.u32(target);
          w.u8(result ?? 0);
        } else if (shape === "u32") w.u32(ins.imm as number);
        else if (shape === "i32") w.i32(ins.imm as number);
        else if (shape === "i64") w.i64(ins.imm as bigint);
        else if (shape === "f32") w.f32(ins.imm as number);
        w.u32(ins.line);
      }
    }
  }

  w.u32(m.globals.length);
  for (let gi = 0; gi < m.globals.length; gi++) {
    const g = m.globals[gi];
    w.u8(g.kind);
    w.u8(g.mutable ? 1 : 0);
    w.name(m.globalNames[gi]);
    if (g.kind === I32) w.i32(g.init as number);
    else if (g.kind === I64) w.i64(g.init as bigint);
    else w.f32(g.init as number);
  }

  w.u32(m.table.length);
  for (const t of m.table) w.u32(t);

  w.u32(m.memoryPages);

  w.u32(m.exports.size);
  for (const [name, fi] of m.exports) {
    w.name(name);
    w.u32(fi);
  }

  return w.value();
}

export function compile(text: string): Buffer {
  return encodeModule(parseModule(text));
}
