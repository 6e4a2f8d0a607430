/** Tagged scalars and their little-endian wire encoding. */

export const I32 = 0x01;
export const I64 = 0x02;
export const F32 = 0x03;
export const F64 = 0x04;

export const KIND_NAMES: Record<number, string> = {
  [I32]: "i32",
  [I64]: "i64",
  [F32]: "f32",
  [F64]: "f64",
};

export const KIND_BY_NAME: Record<string, number> = {
  i32: I32,
  i64: I64,
  f32: F32,
  f64: F64,
};

export interface Value {
  kind: number;
  /** number for i32/f32/f64, bigint for i64 */
  num: number | bigint;
}

export type CodeOffset = readonly [number, number];

export function i32(n: number): Value {
  return { kind: I32, num: n | 0 };
}

export function i64(n: bigint): Value {
  return { kind: I64, num: BigInt.asIntN(64, n) };
}

export function f32(x: number): Value {
  return { kind: F32, num: Math.fround(x) };
}

export function encodeValue(v: Value): Buffer {
  switch (v.kind) {
    case I32: {
      const buf = Buffer.alloc(5);
      buf[0] = I32;
      buf.writeInt32LE(Number(v.num), 1);
      return buf;
    }
    case I64: {
      const buf = Buffer.alloc(9);
      buf[0] = I64;
      buf.writeBigInt64LE(BigInt(v.num), 1);
      return buf;
    }
    case F32: {
      const buf = Buffer.alloc(5);
      buf[0] = F32;
      buf.writeFloatLE(Number(v.num), 1);
      return buf;
    }
    case F64: {
      const buf = Buffer.alloc(9);
      buf[0] = F64;
      buf.writeDoubleLE(Number(v.num), 1);
      return buf;
    }
    default:
      throw new Error(`unknown value kind ${v.kind}`);
  }
}

export function decodeValue(buf: Buffer, pos: number): [Value, number] {
  const kind = buf[pos];
  switch (kind) {
    case I32:
      return [{ kind, num: buf.readInt32LE(pos + 1) }, pos + 5];
    case I64:
      return [{ kind, num: buf.readBigInt64LE(pos + 1) }, pos + 9];
    case F32:
      return [{ kind, num: buf.readFloatLE(pos + 1) }, pos + 5];
    case F64:
      return [{ kind, num: buf.readDoubleLE(pos + 1) }, pos + 9];
    default:
      throw new Error(`unknown value kind ${kind} at ${pos}`);
  }
}

/** Render in the literal syntax the command language accepts back. */
export function showValue(v: Value): string {
  return `${v.num}${KIND_NAMES[v.kind]}`;
}

const LITERAL = /^(-?(?:\d+\.?\d*|\.\d+)(?:[eE]-?\d+)?)(i32|i64|f32|f64)$/;

export function parseValueLiteral(text: string): Value {
  const m = LITERAL.exec(text.trim());
  if (!m) throw new Error(`bad value literal '${text}' (want e.g. 7i64, 21.5f32)`);
  const [, num, kind] = m;
  switch (kind) {
    case "i32":
      return i32(Number(num));
    case "i64":
      return i64(BigInt(num));
    case "f32":
      return f32(Number(num));
    default:
      return { kind: F64, num: Number(num) };
  }
}
