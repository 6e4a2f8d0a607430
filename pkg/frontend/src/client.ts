/** The interactive debugging loop: two VM connections, one human.
 *
 * Commands map one to one onto wire interrupts. Session pulls land on
 * the reconstruction VM, and once a session has been pulled every
 * stepping command goes to the reconstruction only; the device link is
 * used for breakpoint management before the pull, proxied calls, and
 * committed fixes.
 */

import net from "net";
import path from "path";

import { ClientConfig } from "./config.js";
import { BaselineDump, Session, decodeDump, decodeSession } from "./session.js";
import { Module, compile, encodeModule, parseModule, resolveBreakpoint } from "./watc.js";
import {
  CodeOffset, KIND_NAMES, Value, parseValueLiteral, showValue,
} from "./values.js";
import * as wire from "./wire.js";

class PushWaiter {
  private queue: Buffer[] = [];
  private waiters: ((b: Buffer) => void)[] = [];

  push(b: Buffer): void {
    const w = this.waiters.shift();
    if (w) w(b);
    else this.queue.push(b);
  }

  wait(timeoutMs: number): Promise<Buffer> {
    const ready = this.queue.shift();
    if (ready) return Promise.resolve(ready);
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        const i = this.waiters.indexOf(handler);
        if (i >= 0) this.waiters.splice(i, 1);
        reject(new Error(`no session push within ${timeoutMs}ms`));
      }, timeoutMs);
      const handler = (b: Buffer) => {
        clearTimeout(timer);
        resolve(b);
      };
      this.waiters.push(handler);
    });
  }
}

export class Connection {
  private splitter = new wire.FrameSplitter();
  private pendingReplies: ((r: wire.Response) => void)[] = [];
  private chain: Promise<unknown> = Promise.resolve();
  readonly pushes = new PushWaiter();
  onPush: ((payload: Buffer) => void) | null = null;

  private constructor(public name: string, private sock: net.Socket) {
    sock.on("data", (data) => {
      for (const body of this.splitter.feed(data)) {
        const resp = wire.decodeResponse(body);
        if (resp.status === wire.ST_PUSH_SESSION) {
          this.pushes.push(resp.payload);
          this.onPush?.(resp.payload);
        } else {
          const waiter = this.pendingReplies.shift();
          waiter?.(resp);
        }
      }
    });
  }

  static connect(name: string, host: string, port: number,
                 timeoutMs = 5000): Promise<Connection> {
    return new Promise((resolve, reject) => {
      const sock = net.createConnection({ host, port });
      const timer = setTimeout(
        () => reject(new Error(`timeout connecting to ${name}`)), timeoutMs);
      sock.once("connect", () => {
        clearTimeout(timer);
        sock.setNoDelay(true);
        resolve(new Connection(name, sock));
      });
      sock.once("error", (e) => {
        clearTimeout(timer);
        reject(e);
      });
    });
  }

  /** Requests are strictly serialized per connection. */
  request(opcode: number, payload: Buffer = Buffer.alloc(0),
          timeoutMs = 30000): Promise<wire.Response> {
    const task = this.chain.then(() => new Promise<wire.Response>(
      (resolve, reject) => {
        const timer = setTimeout(() => {
          reject(new Error(`${this.name}: no reply within ${timeoutMs}ms`));
        }, timeoutMs);
        this.pendingReplies.push((r) => {
          clearTimeout(timer);
          resolve(r);
        });
        this.sock.write(wire.frame(wire.encodeInterrupt(opcode, payload)));
      }));
    this.chain = task.catch(() => undefined);
    return task;
  }

  close(): void {
    this.sock.destroy();
  }
}

function expectOk(name: string, resp: wire.Response): wire.Response {
  if (resp.status !== wire.ST_OK) {
    const [code, message] = wire.parseError(resp.payload);
    throw new Error(`${name} refused (code ${code}): ${message}`);
  }
  return resp;
}

export class DebuggerClient {
  module: Module;
  remote!: Connection;
  local!: Connection;
  pulled = false;
  private remoteSet = new Set<number>();
  private instrLines = new Map<string, number>();
  private programName: string;

  constructor(public config: ClientConfig, programText: string) {
    this.module = parseModule(programText);
    this.programName = path.basename(config.program);
    this.module.funcs.forEach((f, fi) => {
      f.body.forEach((ins, off) => this.instrLines.set(`${fi}:${off}`, ins.line));
    });
  }

  async connect(): Promise<string[]> {
    const out: string[] = [];
    this.remote = await Connection.connect(
      this.config.remote.name, this.config.remote.host!, this.config.remote.port);
    this.local = await Connection.connect(
      this.config.local.name, "127.0.0.1", this.config.local.port);
    out.push(`connected to ${this.config.remote.name} and ${this.config.local.name}`);

    this.remote.onPush = (payload) => {
      void this.forwardSession(payload);
    };

    const policy = this.config.remote.policy ?? "pause";
    expectOk("set-policy", await this.remote.request(
      wire.SET_POLICY, wire.packPolicy(wire.POLICY_CODES[policy])));
    out.push(`device breakpoint policy: ${policy}`);

    for (const sym of this.config.proxy) {
      this.remoteSet.add(this.resolveFunc(sym));
    }
    if (this.remoteSet.size) {
      expectOk("monitor-proxies", await this.local.request(
        wire.MONITOR_PROXIES, wire.packFuncList([...this.remoteSet].sort((a, b) => a - b))));
      out.push(`proxied to the device: ${this.config.proxy.join(", ")}`);
    }
    return out;
  }

  private resolveFunc(sym: string): number {
    const name = sym.startsWith("$") ? sym.slice(1) : sym;
    const idx = this.module.funcs.findIndex((f) => f.name === name);
    if (idx < 0) {
      const asNum = Number(sym);
      if (Number.isInteger(asNum) && asNum >= 0 && asNum < this.module.funcs.length) {
        return asNum;
      }
      throw new Error(`unknown function ${sym}`);
    }
    return idx;
  }

  private lineOf(c: CodeOffset): number | null {
    return this.instrLines.get(`${c[0]}:${c[1]}`) ?? null;
  }

  private renderLocation(c: CodeOffset | null): string {
    if (c === null) return "none recorded";
    const line = this.lineOf(c);
    if (line === null) return `code offset ${c[0]}:${c[1]}`;
    return `${this.programName}:${line}`;
  }

  private async forwardSession(payload: Buffer): Promise<void> {
    expectOk("receive-state", await this.local.request(wire.RECEIVE_STATE, payload));
    this.pulled = true;
  }

  private async localSession(): Promise<Session> {
    const resp = expectOk("dump", await this.local.request(
      wire.DUMP, wire.packDumpRequest(wire.DUMP_FULL_SESSION)));
    return decodeSession(resp.payload);
  }

  async execute(line: string): Promise<string[]> {
    const words = line.trim().split(/\s+/).filter(Boolean);
    if (!words.length || words[0].startsWith("#")) return [];
    const [cmd, ...args] = words;
    switch (cmd) {
      case "break": {
        const lineNo = Number(args[0]);
        const target = resolveBreakpoint(this.module, lineNo);
        const conn = this.pulled ? this.local : this.remote;
        expectOk("add-breakpoint", await conn.request(
          wire.ADD_BREAKPOINT, wire.packCodeOffset(target)));
        return [`breakpoint at ${this.programName}:${lineNo} on ${conn.name}`];
      }
      case "policy": {
        expectOk("set-policy", await this.remote.request(
          wire.SET_POLICY, wire.packPolicy(this.policyCode(args[0]))));
        return [`device breakpoint policy: ${args[0]}`];
      }
      case "run":
        expectOk("run", await this.local.request(wire.RUN));
        return ["reconstruction running"];
      case "step": {
        const resp = expectOk("step", await this.local.request(wire.STEP));
        return [`stepped; reconstruction ${this.statusName(resp.payload[0])}`];
      }
      case "stepover": {
        const resp = expectOk("step-over", await this.local.request(wire.STEP_OVER));
        return [`stepped over; reconstruction ${this.statusName(resp.payload[0])}`];
      }
      case "pull": {
        const resp = expectOk("dump", await this.remote.request(
          wire.DUMP, wire.packDumpRequest(wire.DUMP_FULL_SESSION)));
        await this.forwardSession(resp.payload);
        const session = decodeSession(resp.payload);
        return [`session pulled (${resp.payload.length} bytes), ` +
                `pc ${this.renderLocation(session.pc)}, ` +
                `depth ${session.callStack.length}`];
      }
      case "inspect":
        return this.inspect(args[0] ?? "stack");
      case "strategy":
        return this.strategy(args);
      case "setlocal": {
        const session = await this.localSession();
        const frame = session.callStack.length - 1;
        expectOk("update", await this.local.request(
          wire.UPDATE_STACK_VALUE,
          wire.packStackEdit(Number(args[0]), parseValueLiteral(args[1]), frame)));
        return [`local ${args[0]} of frame ${frame} set to ${args[1]}`];
      }
      case "setglobal":
        expectOk("update", await this.local.request(
          wire.UPDATE_GLOBAL,
          wire.packGlobalEdit(Number(args[0]), parseValueLiteral(args[1]))));
        return [`global ${args[0]} set to ${args[1]}`];
      case "settable":
        expectOk("update", await this.local.request(
          wire.UPDATE_TABLE_ENTRY,
          wire.packTableEdit(Number(args[0]), this.resolveFunc(args[1]))));
        return [`table entry ${args[0]} set to ${args[1]}`];
      case "commit":
        return this.commit(args);
      case "remote-dump": {
        const resp = expectOk("dump", await this.remote.request(
          wire.DUMP, wire.packDumpRequest(wire.DUMP_BASELINE)));
        const dump = decodeDump(resp.payload);
        return [`device pc ${dump.pc[0]}:${dump.pc[1]}, ` +
                `depth ${dump.callStack.length}, ` +
                `breakpoints ${dump.breakpoints.length}`];
      }
      case "wait-push": {
        const ms = args[0] ? Number(args[0]) : 10000;
        const payload = await this.remote.pushes.wait(ms);
        const session = decodeSession(payload);
        // forwarding happens in the push handler; give it a turn
        await this.localSession();
        return [`session received from ${this.config.remote.name} ` +
                `(pc ${this.renderLocation(session.pc)}); reconstruction loaded`,
                `last fault: ${this.renderLocation(session.errorCounter)}`];
      }
      case "wait-local": {
        const ms = args[0] ? Number(args[0]) : 10000;
        const payload = await this.local.pushes.wait(ms);
        const session = decodeSession(payload);
        return [`reconstruction paused at ${this.renderLocation(session.pc)}`];
      }
      case "quit":
        return ["bye"];
      default:
        throw new Error(`unknown command '${cmd}'`);
    }
  }

  private policyCode(name: string): number {
    const code = wire.POLICY_CODES[name];
    if (code === undefined) throw new Error(`unknown policy '${name}'`);
    return code;
  }

  private statusName(code: number): string {
    return ["running", "paused", "trapped", "halted"][code] ?? `status ${code}`;
  }

  private async inspect(what: string): Promise<string[]> {
    const session = await this.localSession();
    switch (what) {
      case "stack": {
        if (!session.valueStack.length) return ["value stack: empty"];
        const lines = ["value stack (top last):"];
        session.valueStack.forEach((v, i) => lines.push(`  ${i}: ${showValue(v)}`));
        return lines;
      }
      case "locals": {
        const frame = session.callStack[session.callStack.length - 1];
        if (!frame) return ["no frames"];
        const fn = this.module.funcs[frame.funcIndex];
        const lines = [`locals of $${fn?.name ?? frame.funcIndex}:`];
        frame.locals.forEach((v, i) => lines.push(`  ${i}: ${showValue(v)}`));
        if (!frame.locals.length) lines.push("  (none)");
        return lines;
      }
      case "globals": {
        const lines = ["globals:"];
        session.globals.forEach((v, i) => lines.push(
          `  ${i} ($${this.module.globalNames[i] ?? i}): ${showValue(v)}`));
        return lines;
      }
      case "table": {
        const lines = ["table:"];
        session.table.forEach((t, i) => {
          const fn = this.module.funcs[t];
          lines.push(`  ${i}: function ${t}${fn ? ` ($${fn.name})` : ""}`);
        });
        if (!session.table.length) lines.push("  (empty)");
        return lines;
      }
      case "errorloc":
        return [`last fault: ${this.renderLocation(session.errorCounter)}`];
      default:
        throw new Error(`cannot inspect '${what}'`);
    }
  }

  private async strategy(args: string[]): Promise<string[]> {
    const [sym, mode, literal] = args;
    const fidx = this.resolveFunc(sym);
    switch (mode) {
      case "remote": {
        this.remoteSet.add(fidx);
        expectOk("monitor-proxies", await this.local.request(
          wire.MONITOR_PROXIES,
          wire.packFuncList([...this.remoteSet].sort((a, b) => a - b))));
        return [`${sym}: remote access through the device`];
      }
      case "cache": {
        expectOk("use-cache", await this.local.request(
          wire.PROXY_USE_CACHE, wire.packFuncList([fidx])));
        return [`${sym}: replaying cached device replies`];
      }
      case "mock": {
        this.remoteSet.delete(fidx);
        const value: Value | null = literal ? parseValueLiteral(literal) : null;
        expectOk("mock", await this.local.request(
          wire.PROXY_MOCK, wire.packMock(fidx, value)));
        return [`${sym}: mocked ${literal ?? "(zero value)"}`];
      }
      default:
        throw new Error("strategy takes remote|cache|mock [value]");
    }
  }

  private async commit(args: string[]): Promise<string[]> {
    const fs = await import("fs");
    const file = args[0];
    const toLocal = args[1] === "local";
    const source = fs.readFileSync(file, "utf-8");
    const blob = compile(source);
    const conn = toLocal ? this.local : this.remote;
    expectOk("update-module", await conn.request(wire.UPDATE_MODULE, blob, 60000));
    if (!toLocal) {
      // the committed module is the program both VMs now run
      this.module = parseModule(source);
      this.instrLines.clear();
      this.module.funcs.forEach((f, fi) => {
        f.body.forEach((ins, off) => this.instrLines.set(`${fi}:${off}`, ins.line));
      });
      this.programName = path.basename(file);
    }
    return [`module committed to ${conn.name} (${blob.length} byte program)`];
  }

  close(): void {
    this.remote?.close();
    this.local?.close();
  }
}

export { encodeModule };
