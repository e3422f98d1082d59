/**
 * Independent reimplementation of the skyshard binary formats: frames,
 * sealed objects, aggregate states, and result payloads. Deliberately
 * shares no code with the server side - decoding the committed golden
 * fixtures to identical values is the conformance proof of PROTOCOL.md.
 *
 * Value mapping: Int64 -> bigint, Float64 -> number, Utf8 -> string.
 */

import { inflateSync } from "node:zlib";
import { DecodeFailed, ProtocolError } from "./errors.js";

export const MAGIC = "SKY1";
export const FORMAT_VERSION = 1;
export const MAX_PAYLOAD = 64 * 1024 * 1024;

export const MSG = {
  PUT_OBJECT: 1,
  GET_OBJECT: 2,
  EXEC: 3,
  BUILD_INDEX: 4,
  LOOKUP_INDEX: 5,
  PING: 6,
  SUBMIT_QUERY: 7,
  COMPRESS: 8,
  RESPONSE_FLAG: 0x80,
} as const;

export type ColumnType = "i64" | "f64" | "utf8";
export type Value = bigint | number | string;
export type Row = Value[];

export interface Frame {
  requestId: bigint;
  msgType: number;
  payload: Uint8Array;
}

export interface SealedObject {
  kind: number;
  version: number;
  schema: [string, ColumnType][];
  rowCount: number;
  compressed: boolean;
  zoneMap: Record<string, [Value, Value]>;
  payload: Uint8Array;
}

// --- cursor ------------------------------------------------------------------

class Reader {
  private view: DataView;
  pos = 0;

  constructor(private data: Uint8Array) {
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  }

  private need(n: number, what: string): void {
    if (this.pos + n > this.data.length) {
      throw new DecodeFailed(`truncated: ${what}`);
    }
  }

  u8(what = "u8"): number {
    this.need(1, what);
    return this.view.getUint8(this.pos++);
  }

  u16(what = "u16"): number {
    this.need(2, what);
    const v = this.view.getUint16(this.pos, true);
    this.pos += 2;
    return v;
  }

  u32(what = "u32"): number {
    this.need(4, what);
    const v = this.view.getUint32(this.pos, true);
    this.pos += 4;
    return v;
  }

  u64(what = "u64"): bigint {
    this.need(8, what);
    const v = this.view.getBigUint64(this.pos, true);
    this.pos += 8;
    return v;
  }

  i64(what = "i64"): bigint {
    this.need(8, what);
    const v = this.view.getBigInt64(this.pos, true);
    this.pos += 8;
    return v;
  }

  f64(what = "f64"): number {
    this.need(8, what);
    const v = this.view.getFloat64(this.pos, true);
    this.pos += 8;
    return v;
  }

  bytes(n: number, what = "bytes"): Uint8Array {
    this.need(n, what);
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  utf8(n: number, what = "utf8"): string {
    return new TextDecoder("utf-8").decode(this.bytes(n, what));
  }

  str16(what = "str16"): string {
    return this.utf8(this.u16(what), what);
  }

  str32(what = "str32"): string {
    return this.utf8(this.u32(what), what);
  }

  get remaining(): number {
    return this.data.length - this.pos;
  }

  rest(): Uint8Array {
    return this.bytes(this.remaining);
  }

  expectEnd(what: string): void {
    if (this.remaining !== 0) {
      throw new ProtocolError(`trailing bytes after ${what}`);
    }
  }
}

class Writer {
  private chunks: Uint8Array[] = [];

  u8(v: number): this {
    this.chunks.push(Uint8Array.of(v & 0xff));
    return this;
  }

  u16(v: number): this {
    const b = new DataView(new ArrayBuffer(2));
    b.setUint16(0, v, true);
    this.chunks.push(new Uint8Array(b.buffer));
    return this;
  }

  u32(v: number): this {
    const b = new DataView(new ArrayBuffer(4));
    b.setUint32(0, v, true);
    this.chunks.push(new Uint8Array(b.buffer));
    return this;
  }

  u64(v: bigint | number): this {
    const b = new DataView(new ArrayBuffer(8));
    b.setBigUint64(0, BigInt(v), true);
    this.chunks.push(new Uint8Array(b.buffer));
    return this;
  }

  i64(v: bigint): this {
    const b = new DataView(new ArrayBuffer(8));
    b.setBigInt64(0, v, true);
    this.chunks.push(new Uint8Array(b.buffer));
    return this;
  }

  f64(v: number): this {
    const b = new DataView(new ArrayBuffer(8));
    b.setFloat64(0, v, true);
    this.chunks.push(new Uint8Array(b.buffer));
    return this;
  }

  bytes(data: Uint8Array): this {
    this.chunks.push(data);
    return this;
  }

  str16(s: string): this {
    const raw = new TextEncoder().encode(s);
    if (raw.length > 0xffff) throw new ProtocolError("string too long for u16 prefix");
    return this.u16(raw.length).bytes(raw);
  }

  str32(s: string): this {
    const raw = new TextEncoder().encode(s);
    return this.u32(raw.length).bytes(raw);
  }

  finish(): Uint8Array {
    const total = this.chunks.reduce((n, c) => n + c.length, 0);
    const out = new Uint8Array(total);
    let pos = 0;
    for (const c of this.chunks) {
      out.set(c, pos);
      pos += c.length;
    }
    return out;
  }
}

// --- frames --------------------------------------------------------------------

export function encodeFrame(frame: Frame): Uint8Array {
  if (frame.payload.length > MAX_PAYLOAD) {
    throw new ProtocolError(`payload ${frame.payload.length} exceeds ${MAX_PAYLOAD}`);
  }
  return new Writer()
    .u32(9 + frame.payload.length)
    .u64(frame.requestId)
    .u8(frame.msgType)
    .bytes(frame.payload)
    .finish();
}

/** Decode one frame; returns [frame, bytesConsumed]. */
export function decodeFrame(data: Uint8Array): [Frame, number] {
  const r = new Reader(data);
  const length = r.u32("frame length");
  if (length < 9) throw new ProtocolError(`frame length ${length} below header size`);
  if (length - 9 > MAX_PAYLOAD) throw new ProtocolError("frame exceeds payload cap");
  const requestId = r.u64("request id");
  const msgType = r.u8("msg type");
  const payload = r.bytes(length - 9, "frame payload");
  return [{ requestId, msgType, payload }, 4 + length];
}

// --- sealed objects ---------------------------------------------------------------

function parseSchemaText(text: string): [string, ColumnType][] {
  if (text.length === 0) throw new DecodeFailed("empty schema text");
  return text.split(",").map((entry) => {
    const sep = entry.lastIndexOf(":");
    const name = entry.slice(0, sep);
    const tag = entry.slice(sep + 1);
    if (sep < 1 || !["i64", "f64", "utf8"].includes(tag)) {
      throw new DecodeFailed(`bad schema entry ${JSON.stringify(entry)}`);
    }
    return [name, tag as ColumnType];
  });
}

export function schemaText(schema: [string, ColumnType][]): string {
  return schema.map(([n, t]) => `${n}:${t}`).join(",");
}

export function decodeObject(data: Uint8Array): SealedObject {
  const r = new Reader(data);
  const magic = r.utf8(4, "magic");
  if (magic !== MAGIC) throw new DecodeFailed(`bad magic ${JSON.stringify(magic)}`);
  const kind = r.u8("kind");
  if (kind > 1) throw new DecodeFailed(`unknown object kind ${kind}`);
  const version = r.u32("version");
  if (version !== FORMAT_VERSION) throw new DecodeFailed(`unsupported version ${version}`);
  const schema = parseSchemaText(r.str32("schema text"));
  const rowCount = Number(r.u64("row count"));
  const compressed = r.u8("compressed flag") !== 0;
  const zoneMap: Record<string, [Value, Value]> = {};
  for (const [name, ctype] of schema) {
    const present = r.u8(`zone presence ${name}`);
    if (present) {
      if (ctype === "i64") {
        zoneMap[name] = [r.i64(), r.i64()];
      } else {
        zoneMap[name] = [r.f64(), r.f64()];
      }
    }
  }
  const payloadLen = Number(r.u64("payload length"));
  const payload = r.bytes(payloadLen, "payload");
  r.expectEnd("payload");
  return { kind, version, schema, rowCount, compressed, zoneMap, payload };
}

/** Re-serialize a decoded object verbatim (payload carried opaque). */
export function encodeObject(obj: SealedObject): Uint8Array {
  const text = new TextEncoder().encode(schemaText(obj.schema));
  const w = new Writer()
    .bytes(new TextEncoder().encode(MAGIC))
    .u8(obj.kind)
    .u32(obj.version)
    .u32(text.length)
    .bytes(text)
    .u64(obj.rowCount)
    .u8(obj.compressed ? 1 : 0);
  for (const [name, ctype] of obj.schema) {
    const bounds = obj.zoneMap[name];
    if (!bounds) {
      w.u8(0);
      continue;
    }
    w.u8(1);
    if (ctype === "i64") w.i64(bounds[0] as bigint).i64(bounds[1] as bigint);
    else w.f64(bounds[0] as number).f64(bounds[1] as number);
  }
  return w.u64(obj.payload.length).bytes(obj.payload).finish();
}

export function objectRows(obj: SealedObject): Row[] {
  const raw = obj.compressed ? new Uint8Array(inflateSync(obj.payload)) : obj.payload;
  const r = new Reader(raw);
  const rows: Row[] = [];
  for (let i = 0; i < obj.rowCount; i++) {
    const row: Row = [];
    for (const [, ctype] of obj.schema) {
      if (ctype === "i64") row.push(r.i64("row value"));
      else if (ctype === "f64") row.push(r.f64("row value"));
      else row.push(r.str32("row string"));
    }
    rows.push(row);
  }
  r.expectEnd("rows");
  return rows;
}

/** Encode rows as an uncompressed table-shard object (the ingest format). */
export function encodeTableObject(schema: [string, ColumnType][], rows: Row[]): Uint8Array {
  const body = new Writer();
  for (const row of rows) {
    if (row.length !== schema.length) {
      throw new ProtocolError(`row has ${row.length} values, schema has ${schema.length}`);
    }
    for (let c = 0; c < schema.length; c++) {
      const [name, ctype] = schema[c];
      const v = row[c];
      if (ctype === "i64") {
        if (typeof v !== "bigint") throw new ProtocolError(`column ${name}: expected bigint`);
        body.i64(v);
      } else if (ctype === "f64") {
        if (typeof v !== "number" || !Number.isFinite(v)) {
          throw new ProtocolError(`column ${name}: expected finite number`);
        }
        body.f64(v);
      } else {
        if (typeof v !== "string") throw new ProtocolError(`column ${name}: expected string`);
        body.str32(v);
      }
    }
  }
  const zone = new Writer();
  for (let c = 0; c < schema.length; c++) {
    const [, ctype] = schema[c];
    if (ctype === "utf8" || rows.length === 0) {
      zone.u8(0);
      continue;
    }
    zone.u8(1);
    if (ctype === "i64") {
      let lo = rows[0][c] as bigint;
      let hi = lo;
      for (const row of rows) {
        const v = row[c] as bigint;
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
      zone.i64(lo).i64(hi);
    } else {
      let lo = rows[0][c] as number;
      let hi = lo;
      for (const row of rows) {
        const v = row[c] as number;
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
      zone.f64(lo).f64(hi);
    }
  }
  const payload = body.finish();
  const text = new TextEncoder().encode(schemaText(schema));
  return new Writer()
    .bytes(new TextEncoder().encode(MAGIC))
    .u8(0) // table shard
    .u32(FORMAT_VERSION)
    .u32(text.length)
    .bytes(text)
    .u64(rows.length)
    .u8(0) // uncompressed
    .bytes(zone.finish())
    .u64(payload.length)
    .bytes(payload)
    .finish();
}

// --- aggregate states ----------------------------------------------------------------

export type AggState =
  | { variant: "count"; n: number }
  | { variant: "sum"; total: bigint; n: number; isFloat: boolean }
  | { variant: "min" | "max"; value: Value | null; isFloat: boolean }
  | { variant: "values"; values: Value[]; isFloat: boolean }
  | {
      variant: "histogram";
      lo: number;
      hi: number;
      counts: number[];
      n: number;
      below: number;
      above: number;
    };

/** Exact sum * 2**-1074 as the nearest double (ties to even). */
export function scaledToFloat(s: bigint): number {
  if (s === 0n) return 0;
  const negative = s < 0n;
  let a = negative ? -s : s;
  const bl = a.toString(2).length;
  let value: number;
  if (bl <= 53) {
    value = Number(a) * 2 ** -1074; // exact mantissa; one correctly rounded step
  } else {
    const shift = BigInt(bl - 53);
    let m = a >> shift; // top 53 bits
    const rem = a - (m << shift);
    const half = 1n << (shift - 1n);
    if (rem > half || (rem === half && (m & 1n) === 1n)) m += 1n;
    let exp = bl - 53 - 1074;
    if (m === 1n << 53n) {
      m >>= 1n;
      exp += 1;
    }
    value = Number(m) * 2 ** exp; // both factors exact, result normal
  }
  return negative ? -value : value;
}

function readVarInt(r: Reader): bigint {
  const len = r.u16("sum length");
  const raw = r.bytes(len, "sum bytes");
  let v = 0n;
  for (let i = raw.length - 1; i >= 0; i--) v = (v << 8n) | BigInt(raw[i]);
  if (raw.length > 0 && raw[raw.length - 1] & 0x80) v -= 1n << BigInt(8 * raw.length);
  return v;
}

export function decodeAggState(data: Uint8Array): AggState {
  const r = new Reader(data);
  const variant = r.u8("state variant");
  const isFloat = r.u8("value type") === 1;
  const value = (): Value => (isFloat ? r.f64() : r.i64());
  switch (variant) {
    case 0:
      return { variant: "count", n: Number(r.u64()) };
    case 1: {
      const total = readVarInt(r);
      return { variant: "sum", total, n: Number(r.u64()), isFloat };
    }
    case 2:
    case 3: {
      const present = r.u8("presence");
      return {
        variant: variant === 2 ? "min" : "max",
        value: present ? value() : null,
        isFloat,
      };
    }
    case 4: {
      const n = Number(r.u64());
      const values: Value[] = [];
      for (let i = 0; i < n; i++) values.push(value());
      return { variant: "values", values, isFloat };
    }
    case 5: {
      const lo = r.f64();
      const hi = r.f64();
      const bins = r.u32();
      const counts: number[] = [];
      for (let i = 0; i < bins; i++) counts.push(Number(r.u64()));
      return {
        variant: "histogram",
        lo,
        hi,
        counts,
        n: Number(r.u64()),
        below: Number(r.u64()),
        above: Number(r.u64()),
      };
    }
    default:
      throw new DecodeFailed(`unknown aggregate state variant ${variant}`);
  }
}

// --- request/response payloads ----------------------------------------------------------

export function buildPut(name: string, objBytes: Uint8Array): Uint8Array {
  return new Writer().str16(name).bytes(objBytes).finish();
}

export function buildGet(name: string): Uint8Array {
  return new Writer().str16(name).finish();
}

export function buildSubmitQuery(text: string): Uint8Array {
  return new Writer().str32(text).finish();
}

export type QueryResult =
  | { kind: "rows"; object: SealedObject; rows: Row[] }
  | { kind: "scalar"; value: bigint | number };

export function parseQueryResult(body: Uint8Array): QueryResult {
  const r = new Reader(body);
  const tag = r.u8("result tag");
  if (tag === 0) {
    const object = decodeObject(r.rest());
    return { kind: "rows", object, rows: objectRows(object) };
  }
  if (tag !== 1) throw new ProtocolError(`unknown result tag ${tag}`);
  const raw = r.bytes(8, "scalar value");
  const typeTag = r.u8("scalar type tag");
  r.expectEnd("scalar");
  const view = new DataView(raw.buffer, raw.byteOffset, 8);
  if (typeTag === 0) return { kind: "scalar", value: view.getBigInt64(0, true) };
  if (typeTag === 1) return { kind: "scalar", value: view.getFloat64(0, true) };
  throw new ProtocolError(`unknown scalar type tag ${typeTag}`);
}

export interface ExecResult {
  tag: number;
  ordinals: number[];
  object?: SealedObject;
  state?: AggState;
}

export function parseExecResult(body: Uint8Array): ExecResult {
  const r = new Reader(body);
  const tag = r.u8("exec result tag");
  if (tag === 0) {
    const count = r.u32("ordinal count");
    const ordinals: number[] = [];
    for (let i = 0; i < count; i++) ordinals.push(r.u32());
    return { tag, ordinals, object: decodeObject(r.rest()) };
  }
  return { tag, ordinals: [], state: decodeAggState(r.rest()) };
}

export function parseLookupResult(body: Uint8Array): [number, number[]][] {
  const r = new Reader(body);
  const count = r.u32("group count");
  const groups: [number, number[]][] = [];
  for (let i = 0; i < count; i++) {
    const partition = Number(r.u64("partition index"));
    const n = r.u32("ordinal count");
    const ordinals: number[] = [];
    for (let j = 0; j < n; j++) ordinals.push(r.u32());
    groups.push([partition, ordinals]);
  }
  r.expectEnd("lookup groups");
  return groups;
}

export function parseExecRequest(payload: Uint8Array): { name: string; text: string } {
  const r = new Reader(payload);
  const name = r.str16("object name");
  const text = r.str32("subquery text");
  r.expectEnd("exec request");
  return { name, text };
}

export function parseLookupRequest(payload: Uint8Array): {
  dataset: string;
  column: string;
  literal: bigint | string;
} {
  const r = new Reader(payload);
  const dataset = r.str16();
  const column = r.str16();
  const tag = r.u8("literal tag");
  const literal = tag === 1 ? r.str32() : r.i64();
  r.expectEnd("lookup request");
  return { dataset, column, literal };
}
