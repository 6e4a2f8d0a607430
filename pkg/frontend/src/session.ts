/** Decoder for the binary debug-session stream and the baseline dump. */

import { CodeOffset, Value, decodeValue } from "./values.js";

export const CHUNK_PC = 0x01;
export const CHUNK_ERROR_COUNTER = 0x02;
export const CHUNK_BREAKPOINTS = 0x03;
export const CHUNK_VALUE_STACK = 0x04;
export const CHUNK_CALL_STACK = 0x05;
export const CHUNK_GLOBALS = 0x06;
export const CHUNK_TABLE = 0x07;
export const CHUNK_MEMORY_PAGES = 0x08;
export const CHUNK_MODULE_HASH = 0x09;

const WIRE_ORDER = [
  CHUNK_PC, CHUNK_ERROR_COUNTER, CHUNK_BREAKPOINTS, CHUNK_GLOBALS,
  CHUNK_TABLE, CHUNK_VALUE_STACK, CHUNK_CALL_STACK, CHUNK_MEMORY_PAGES,
  CHUNK_MODULE_HASH,
];

export interface FrameInfo {
  funcIndex: number;
  returnPc: CodeOffset | null;
  valueStackBase: number;
  locals: Value[];
}

export interface Session {
  pc: CodeOffset;
  errorCounter: CodeOffset | null;
  breakpoints: CodeOffset[];
  valueStack: Value[];
  callStack: FrameInfo[];
  globals: Value[];
  memoryPages: Buffer;
  table: number[];
  moduleHash: Buffer;
}

function coff(buf: Buffer, pos: number): [CodeOffset, number] {
  return [[buf.readUInt32LE(pos), buf.readUInt32LE(pos + 4)], pos + 8];
}

function optCoff(buf: Buffer, pos: number): [CodeOffset | null, number] {
  const present = buf[pos];
  const [c, end] = coff(buf, pos + 1);
  return [present ? c : null, end];
}

function values(buf: Buffer, pos: number, count: number): [Value[], number] {
  const out: Value[] = [];
  for (let i = 0; i < count; i++) {
    const [v, next] = decodeValue(buf, pos);
    out.push(v);
    pos = next;
  }
  return [out, pos];
}

export function decodeSession(stream: Buffer): Session {
  if (stream.length < 20) throw new Error("truncated sizing message");
  const sizing = {
    valueStackLen: stream.readUInt32LE(0),
    callStackLen: stream.readUInt32LE(4),
    globalsLen: stream.readUInt32LE(8),
    tableLen: stream.readUInt32LE(12),
    memoryPageCount: stream.readUInt32LE(16),
  };

  const fields = new Map<number, Buffer>();
  let pos = 20;
  let orderPos = 0;
  let terminated = false;
  while (pos < stream.length) {
    if (terminated) throw new Error("data after terminal chunk");
    const kind = stream[pos];
    const len = stream.readUInt32LE(pos + 1);
    const payload = stream.subarray(pos + 5, pos + 5 + len);
    const done = stream[pos + 5 + len];
    pos += 5 + len + 1;
    if (kind !== WIRE_ORDER[orderPos]) throw new Error(`chunk ${kind} out of order`);
    fields.set(kind, payload);
    orderPos += 1;
    if (done === 0x01) {
      if (orderPos !== WIRE_ORDER.length) throw new Error("early terminator");
      terminated = true;
    }
  }
  if (!terminated) throw new Error("unterminated session");

  const [pc] = coff(fields.get(CHUNK_PC)!, 0);
  const [errorCounter] = optCoff(fields.get(CHUNK_ERROR_COUNTER)!, 0);

  let buf = fields.get(CHUNK_BREAKPOINTS)!;
  const breakpoints: CodeOffset[] = [];
  let p = 4;
  for (let i = 0; i < buf.readUInt32LE(0); i++) {
    const [c, next] = coff(buf, p);
    breakpoints.push(c);
    p = next;
  }

  buf = fields.get(CHUNK_GLOBALS)!;
  const [globals] = values(buf, 4, buf.readUInt32LE(0));

  buf = fields.get(CHUNK_TABLE)!;
  const table: number[] = [];
  for (let i = 0; i < buf.readUInt32LE(0); i++) table.push(buf.readUInt32LE(4 + 4 * i));

  buf = fields.get(CHUNK_VALUE_STACK)!;
  const [valueStack] = values(buf, 4, buf.readUInt32LE(0));

  buf = fields.get(CHUNK_CALL_STACK)!;
  const callStack: FrameInfo[] = [];
  p = 4;
  for (let i = 0; i < buf.readUInt32LE(0); i++) {
    const funcIndex = buf.readUInt32LE(p);
    const [returnPc, afterRet] = optCoff(buf, p + 4);
    const valueStackBase = buf.readUInt32LE(afterRet);
    const nLocals = buf.readUInt32LE(afterRet + 4);
    const [locals, next] = values(buf, afterRet + 8, nLocals);
    callStack.push({ funcIndex, returnPc, valueStackBase, locals });
    p = next;
  }

  buf = fields.get(CHUNK_MEMORY_PAGES)!;
  const memoryPages = buf.subarray(4);

  const moduleHash = fields.get(CHUNK_MODULE_HASH)!;
  if (sizing.callStackLen !== callStack.length) throw new Error("sizing mismatch");
  return {
    pc, errorCounter, breakpoints, valueStack, callStack, globals,
    memoryPages, table, moduleHash,
  };
}

export interface BaselineDump {
  pc: CodeOffset;
  callStack: [number, CodeOffset | null][];
  breakpoints: CodeOffset[];
}

export function decodeDump(buf: Buffer): BaselineDump {
  const [pc, afterPc] = coff(buf, 0);
  const n = buf.readUInt32LE(afterPc);
  let p = afterPc + 4;
  const callStack: [number, CodeOffset | null][] = [];
  for (let i = 0; i < n; i++) {
    const funcIndex = buf.readUInt32LE(p);
    const [ret, next] = optCoff(buf, p + 4);
    callStack.push([funcIndex, ret]);
    p = next;
  }
  const nb = buf.readUInt32LE(p);
  p += 4;
  const breakpoints: CodeOffset[] = [];
  for (let i = 0; i < nb; i++) {
    const [c, next] = coff(buf, p);
    breakpoints.push(c);
    p = next;
  }
  return { pc, callStack, breakpoints };
}
