/**
 * A connection to a skyshard driver service. One connection carries one
 * request at a time from the caller's point of view (open one connection
 * per concurrent task); responses are still matched by request id.
 */

import { Socket } from "node:net";
import {
  ConnectionRefused,
  ProtocolError,
  STATUS_OK,
  errorForStatus,
} from "./errors.js";
import {
  ColumnType,
  Frame,
  MSG,
  Row,
  buildGet,
  buildPut,
  buildSubmitQuery,
  decodeFrame,
  encodeFrame,
  encodeTableObject,
  parseQueryResult,
} from "./format.js";

interface Pending {
  resolve: (v: { status: number; body: Uint8Array }) => void;
  reject: (e: Error) => void;
  msgType: number;
}

export class Connection {
  private socket: Socket;
  private buffer = new Uint8Array(0);
  private pending = new Map<bigint, Pending>();
  private nextRequestId = 1n; // strictly increasing per connection
  private closed = false;

  private constructor(socket: Socket) {
    this.socket = socket;
    socket.on("data", (chunk: Buffer) => this.onData(chunk));
    socket.on("error", (err: Error) => this.failAll(err));
    socket.on("close", () => {
      if (!this.closed) this.failAll(new ProtocolError("connection closed"));
    });
  }

  /** Open a TCP connection and verify it with a PING round trip. */
  static async connect(address: string, timeoutMs = 10_000): Promise<Connection> {
    const sep = address.lastIndexOf(":");
    const host = address.slice(0, sep);
    const port = Number(address.slice(sep + 1));
    if (!host || !Number.isInteger(port)) {
      throw new ConnectionRefused(`bad address ${JSON.stringify(address)}`);
    }
    const socket = new Socket();
    socket.setNoDelay(true);
    await new Promise<void>((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new ConnectionRefused(`connect ${address}: timeout`)),
        timeoutMs,
      );
      socket.once("error", (err) => {
        clearTimeout(timer);
        reject(new ConnectionRefused(`connect ${address}: ${err.message}`));
      });
      socket.connect(port, host, () => {
        clearTimeout(timer);
        socket.removeAllListeners("error");
        resolve();
      });
    });
    const conn = new Connection(socket);
    await conn.request(MSG.PING, new Uint8Array(0));
    return conn;
  }

  /** Idempotent. In-flight requests fail with ProtocolError. */
  close(): void {
    if (this.closed) return;
    this.closed = true;
    this.socket.destroy();
    this.failAll(new ProtocolError("connection closed by caller"));
  }

  private failAll(err: Error): void {
    for (const p of this.pending.values()) p.reject(err);
    this.pending.clear();
  }

  private onData(chunk: Buffer): void {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;
    for (;;) {
      if (this.buffer.length < 4) return;
      const view = new DataView(this.buffer.buffer, this.buffer.byteOffset, 4);
      const length = view.getUint32(0, true);
      if (this.buffer.length < 4 + length) return;
      let frame: Frame;
      try {
        [frame] = decodeFrame(this.buffer);
      } catch (err) {
        this.failAll(err as Error);
        this.socket.destroy();
        return;
      }
      this.buffer = this.buffer.subarray(4 + length);
      this.onFrame(frame);
    }
  }

  private onFrame(frame: Frame): void {
    const waiter = this.pending.get(frame.requestId);
    if (!waiter) return; // stale or duplicated response: drop
    this.pending.delete(frame.requestId);
    if (frame.msgType !== (waiter.msgType | MSG.RESPONSE_FLAG) && frame.msgType !== 0xff) {
      waiter.reject(new ProtocolError(`unexpected response type ${frame.msgType}`));
      return;
    }
    if (frame.payload.length === 0) {
      waiter.reject(new ProtocolError("empty response payload"));
      return;
    }
    waiter.resolve({ status: frame.payload[0], body: frame.payload.subarray(1) });
  }

  request(
    msgType: number,
    payload: Uint8Array,
  ): Promise<{ status: number; body: Uint8Array }> {
    if (this.closed) return Promise.reject(new ProtocolError("connection is closed"));
    const requestId = this.nextRequestId++;
    const data = encodeFrame({ requestId, msgType, payload });
    return new Promise((resolve, reject) => {
      this.pending.set(requestId, { resolve, reject, msgType });
      this.socket.write(data, (err) => {
        if (err) {
          this.pending.delete(requestId);
          reject(err);
        }
      });
    });
  }

  private async call(msgType: number, payload: Uint8Array): Promise<Uint8Array> {
    const { status, body } = await this.request(msgType, payload);
    if (status !== STATUS_OK) {
      throw errorForStatus(status, new TextDecoder().decode(body));
    }
    return body;
  }

  /**
   * Run query text; resolves to row tuples for selects or a native scalar
   * for aggregates (bigint for i64, number for f64).
   */
  async query(text: string): Promise<Row[] | bigint | number> {
    const body = await this.call(MSG.SUBMIT_QUERY, buildSubmitQuery(text));
    const result = parseQueryResult(body);
    return result.kind === "rows" ? result.rows : result.value;
  }

  /** Column names of the last resort for callers needing the result schema. */
  async queryDetailed(text: string) {
    const body = await this.call(MSG.SUBMIT_QUERY, buildSubmitQuery(text));
    return parseQueryResult(body);
  }

  /**
   * Upload rows as a dataset via the driver (which re-partitions them).
   * Type mismatches are rejected client-side before anything is sent.
   */
  async putTable(
    dataset: string,
    schema: [string, ColumnType][],
    rows: Row[],
  ): Promise<void> {
    const object = encodeTableObject(schema, rows); // validates rows
    await this.call(MSG.PUT_OBJECT, buildPut(`${dataset}.00000000`, object));
  }

  /** Raw sealed-object bytes of one stored object, via the driver. */
  async getObject(name: string): Promise<Uint8Array> {
    return this.call(MSG.GET_OBJECT, buildGet(name));
  }
}

export function connect(address: string): Promise<Connection> {
  return Connection.connect(address);
}
