/**
 * Live end-to-end checks against a real cluster: two storage-node
 * processes, the driver service, the golden query suite (values must equal
 * the committed CLI outputs), ingest round trips, and error surfacing.
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  ColumnType,
  Connection,
  ConnectionRefused,
  NotFound,
  ProtocolError,
  Row,
  UnknownColumn,
  connect,
  decodeObject,
} from "../src/index.js";

const REPO = join(__dirname, "..", "..");
const GOLDEN_QUERIES = join(REPO, "tests", "golden", "queries");
const PYTHON = process.env.PYTHON ?? "python3";

let procs: ChildProcess[] = [];
let driverAddress = "";
let configPath = "";

function waitForReady(proc: ChildProcess, what: string): Promise<string> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error(`${what} start timeout`)), 20_000);
    let buf = "";
    proc.stdout!.on("data", (chunk: Buffer) => {
      buf += chunk.toString();
      const m = buf.match(/listening on ([\w.\-]+:\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]);
      }
    });
    proc.on("exit", (code) => reject(new Error(`${what} exited early (${code}): ${buf}`)));
  });
}

beforeAll(async () => {
  const base = mkdtempSync(join(tmpdir(), "skyshard-sdk-"));
  const nodes: { node_id: string; address: string; data_dir: string }[] = [];
  for (let i = 0; i < 2; i++) {
    const dataDir = join(base, `n${i}`);
    const proc = spawn(PYTHON, [
      "-m", "skyshard", "node", "serve",
      "--node-id", `n${i}`, "--listen", "127.0.0.1:0", "--data-dir", dataDir,
    ], { stdio: ["ignore", "pipe", "pipe"] });
    procs.push(proc);
    const address = await waitForReady(proc, `node n${i}`);
    nodes.push({ node_id: `n${i}`, address, data_dir: dataDir });
  }
  configPath = join(base, "cluster.json");
  writeFileSync(
    configPath,
    JSON.stringify({ nodes, driver: { catalog: join(base, "catalog.json"), fanout: 16 } }),
  );
  execFileSync(PYTHON, [
    "-m", "skyshard", "--config", configPath,
    "load-csv", "weather", join(GOLDEN_QUERIES, "weather.csv"), "--target-rows", "7",
  ], { timeout: 60_000 });
  const driver = spawn(PYTHON, [
    "-m", "skyshard", "--config", configPath, "driver", "serve", "--listen", "127.0.0.1:0",
  ], { stdio: ["ignore", "pipe", "pipe"] });
  procs.push(driver);
  driverAddress = await waitForReady(driver, "driver");
}, 60_000);

afterAll(() => {
  for (const proc of procs) proc.kill("SIGTERM");
  procs = [];
});

const WEATHER_TYPES: Record<string, ColumnType> = { id: "i64", temp: "f64", city: "utf8" };

function parseGolden(name: string): { kind: "rows" | "scalar"; rows?: Row[]; scalar?: bigint | number } {
  const text = readFileSync(join(GOLDEN_QUERIES, name), "utf-8");
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 1 && !lines[0].includes("\t")) {
    const s = lines[0];
    return { kind: "scalar", scalar: /^-?\d+$/.test(s) ? BigInt(s) : Number(s) };
  }
  const header = lines[0].split("\t");
  const rows = lines.slice(1).map((line) =>
    line.split("\t").map((cell, c) => {
      const ctype = WEATHER_TYPES[header[c]];
      if (ctype === "i64") return BigInt(cell);
      if (ctype === "f64") return Number(cell);
      return cell;
    }),
  );
  return { kind: "rows", rows };
}

describe("golden query suite over the wire", () => {
  const queries = readFileSync(join(GOLDEN_QUERIES, "queries.txt"), "utf-8")
    .split("\n")
    .filter((l) => l.length > 0);

  it("returns values equal to the committed CLI outputs", async () => {
    const conn = await connect(driverAddress);
    try {
      for (let i = 0; i < queries.length; i++) {
        const want = parseGolden(`q${String(i).padStart(2, "0")}.out`);
        const got = await conn.query(queries[i]);
        if (want.kind === "scalar") {
          expect(got, queries[i]).toBe(want.scalar);
        } else {
          expect(got, queries[i]).toEqual(want.rows);
        }
      }
    } finally {
      conn.close();
    }
  }, 120_000);
});

describe("ingest and passthrough", () => {
  it("put_table then SELECT * returns the same rows", async () => {
    const conn = await connect(driverAddress);
    try {
      const schema: [string, ColumnType][] = [["k", "i64"], ["note", "utf8"]];
      const rows: Row[] = [[1n, "plain"], [2n, "útf-8 ẞtring 😀"], [3n, "a\tb"]];
      await conn.putTable("sdkds", schema, rows);
      expect(await conn.query("SELECT * FROM sdkds")).toEqual(rows);
      // byte-faithful multibyte round trip through the raw object path
      const raw = await conn.getObject("sdkds.00000000");
      const obj = decodeObject(raw);
      expect(obj.schema).toEqual(schema);
    } finally {
      conn.close();
    }
  }, 60_000);

  it("rejects malformed rows client-side", async () => {
    const conn = await connect(driverAddress);
    try {
      await expect(
        conn.putTable("badds", [["k", "i64"]], [[1n, "extra"]] as Row[]),
      ).rejects.toThrow(ProtocolError);
      await expect(
        conn.putTable("badds", [["k", "i64"]], [["not-bigint"]] as Row[]),
      ).rejects.toThrow(ProtocolError);
      // nothing was sent: the dataset must not exist
      await expect(conn.query("SELECT * FROM badds")).rejects.toThrow(NotFound);
    } finally {
      conn.close();
    }
  }, 60_000);

  it("count over an empty ingested table is 0", async () => {
    const conn = await connect(driverAddress);
    try {
      await conn.putTable("emptyds", [["x", "i64"]], []);
      expect(await conn.query("SELECT count(x) FROM emptyds")).toBe(0n);
    } finally {
      conn.close();
    }
  }, 60_000);
});

describe("errors and connection lifecycle", () => {
  it("server status codes surface as typed exceptions", async () => {
    const conn = await connect(driverAddress);
    try {
      await expect(conn.query("SELECT zz FROM weather")).rejects.toThrow(UnknownColumn);
      await expect(conn.query("SELECT * FROM nope")).rejects.toThrow(NotFound);
      await expect(conn.query("SELECT *")).rejects.toThrow(/expected FROM/i);
    } finally {
      conn.close();
    }
  }, 60_000);

  it("double close is a no-op", async () => {
    const conn = await connect(driverAddress);
    conn.close();
    conn.close();
  });

  it("request ids increase strictly per connection", async () => {
    const conn = await connect(driverAddress);
    try {
      await conn.query("SELECT count(id) FROM weather");
      await conn.query("SELECT count(id) FROM weather");
      expect((conn as any).nextRequestId).toBe(4n); // ping + 2 queries consumed 1..3
    } finally {
      conn.close();
    }
  });

  it("connecting to a dead port raises ConnectionRefused", async () => {
    await expect(connect("127.0.0.1:1")).rejects.toThrow(ConnectionRefused);
  });
});
