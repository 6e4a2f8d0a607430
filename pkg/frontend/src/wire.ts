/** Interrupt wire format: one opcode byte, u32le payload length, payload.
 * Responses mirror that with a status byte. Byte-compatible with the VM
 * side; the golden fixtures under ../tests/fixtures pin every encoding. */

import { CodeOffset, Value, decodeValue, encodeValue } from "./values.js";

export const RUN = 0x01;
export const PAUSE = 0x02;
export const STEP = 0x03;
export const STEP_OVER = 0x04;
export const ADD_BREAKPOINT = 0x05;
export const REMOVE_BREAKPOINT = 0x06;
export const DUMP = 0x07;
export const RECEIVE_STATE = 0x08;
export const PROXY_CALL = 0x09;
export const MONITOR_PROXIES = 0x0a;
export const PROXY_USE_CACHE = 0x0b;
export const PROXY_NO_CACHE = 0x0c;
export const UPDATE_MODULE = 0x0d;
export const UPDATE_STACK_VALUE = 0x0e;
export const UPDATE_GLOBAL = 0x0f;
export const UPDATE_TABLE_ENTRY = 0x10;
export const SET_POLICY = 0x11;
export const PROXY_MOCK = 0x12;

export const ST_OK = 0x00;
export const ST_ERR = 0x01;
export const ST_PUSH_SESSION = 0x02;

export const DUMP_FULL_SESSION = 0x00;
export const DUMP_BASELINE = 0x01;

export const POLICY_PAUSE = 0x00;
export const POLICY_SINGLE_STOP = 0x01;
export const POLICY_REMOVE_AND_PROCEED = 0x02;

export const POLICY_CODES: Record<string, number> = {
  pause: POLICY_PAUSE,
  "single-stop": POLICY_SINGLE_STOP,
  "remove-and-proceed": POLICY_REMOVE_AND_PROCEED,
};

export interface Response {
  status: number;
  payload: Buffer;
}

export function encodeInterrupt(opcode: number, payload: Buffer = Buffer.alloc(0)): Buffer {
  const head = Buffer.alloc(5);
  head[0] = opcode;
  head.writeUInt32LE(payload.length, 1);
  return Buffer.concat([head, payload]);
}

export function decodeResponse(body: Buffer): Response {
  if (body.length < 5) throw new Error("response shorter than its header");
  const status = body[0];
  const n = body.readUInt32LE(1);
  if (body.length !== 5 + n) throw new Error("response length disagrees with header");
  return { status, payload: body.subarray(5) };
}

export function parseError(payload: Buffer): [number, string] {
  const code = payload[0];
  const n = payload.readUInt16LE(1);
  return [code, payload.subarray(3, 3 + n).toString("utf-8")];
}

function u32(n: number): Buffer {
  const b = Buffer.alloc(4);
  b.writeUInt32LE(n >>> 0, 0);
  return b;
}

export function packCodeOffset(c: CodeOffset): Buffer {
  return Buffer.concat([u32(c[0]), u32(c[1])]);
}

export function packDumpRequest(mode: number): Buffer {
  return Buffer.from([mode]);
}

export function packPolicy(code: number): Buffer {
  return Buffer.from([code]);
}

export function packFuncList(indices: number[]): Buffer {
  return Buffer.concat([u32(indices.length), ...indices.map(u32)]);
}

export function packProxyCall(fidx: number, args: Value[]): Buffer {
  return Buffer.concat([
    u32(fidx),
    Buffer.from([args.length]),
    ...args.map(encodeValue),
  ]);
}

export const RESULT_VALUE = 0x00;
export const RESULT_TRAP = 0x01;

export interface TrapRecord {
  kind: number;
  at: CodeOffset;
  message: string;
}

export function parseProxyReply(payload: Buffer): Value | TrapRecord | null {
  if (payload[0] === RESULT_TRAP) {
    const kind = payload[1];
    const at: CodeOffset = [payload.readUInt32LE(2), payload.readUInt32LE(6)];
    const n = payload.readUInt16LE(10);
    return { kind, at, message: payload.subarray(12, 12 + n).toString("utf-8") };
  }
  if (payload[1] === 0) return null;
  return decodeValue(payload, 2)[0];
}

export function packStackEdit(index: number, value: Value, frame?: number): Buffer {
  if (frame === undefined) {
    return Buffer.concat([Buffer.from([0x00]), u32(index), encodeValue(value)]);
  }
  return Buffer.concat([Buffer.from([0x01]), u32(frame), u32(index), encodeValue(value)]);
}

export function packGlobalEdit(index: number, value: Value): Buffer {
  return Buffer.concat([u32(index), encodeValue(value)]);
}

export function packTableEdit(index: number, funcIndex: number): Buffer {
  return Buffer.concat([u32(index), u32(funcIndex)]);
}

export function packMock(fidx: number, value: Value | null): Buffer {
  if (value === null) return Buffer.concat([u32(fidx), Buffer.from([0])]);
  return Buffer.concat([u32(fidx), Buffer.from([1]), encodeValue(value)]);
}

/** Incremental splitter for the u32le length-prefixed transport frames. */
export class FrameSplitter {
  private buf: Buffer = Buffer.alloc(0);

  feed(data: Buffer): Buffer[] {
    this.buf = this.buf.length ? Buffer.concat([this.buf, data]) : data;
    const out: Buffer[] = [];
    for (;;) {
      if (this.buf.length < 4) return out;
      const n = this.buf.readUInt32LE(0);
      if (this.buf.length < 4 + n) return out;
      out.push(this.buf.subarray(4, 4 + n));
      this.buf = this.buf.subarray(4 + n);
    }
  }
}

export function frame(body: Buffer): Buffer {
  const head = Buffer.alloc(4);
  head.writeUInt32LE(body.length, 0);
  return Buffer.concat([head, body]);
}
