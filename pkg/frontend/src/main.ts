/** CLI entry: interactive prompt or scripted replay. */

import fs from "fs";
import path from "path";
import readline from "readline";

import { DebuggerClient } from "./client.js";
import { loadConfig } from "./config.js";

function usage(): never {
  process.stderr.write(
    "usage: oot-client --config debugger.json [--script commands.txt]\n");
  process.exit(2);
}

async function runScript(client: DebuggerClient, scriptPath: string): Promise<number> {
  const lines = fs.readFileSync(scriptPath, "utf-8").split("\n");
  let failures = 0;
  for (const line of lines) {
    const trimmed = line.trim();
    if (!trimmed || trimmed.startsWith("#")) continue;
    process.stdout.write(`> ${trimmed}\n`);
    try {
      for (const out of await client.execute(trimmed)) {
        process.stdout.write(`${out}\n`);
      }
    } catch (e) {
      failures += 1;
      process.stdout.write(`error: ${(e as Error).message}\n`);
    }
    if (trimmed === "quit") break;
  }
  return failures ? 1 : 0;
}

async function interact(client: DebuggerClient): Promise<number> {
  const rl = readline.createInterface({
    input: process.stdin,
    output: process.stdout,
    prompt: "(oot) ",
  });
  rl.prompt();
  for await (const line of rl) {
    if (!line.trim()) {
      rl.prompt();
      continue;
    }
    try {
      for (const out of await client.execute(line)) {
        process.stdout.write(`${out}\n`);
      }
    } catch (e) {
      process.stdout.write(`error: ${(e as Error).message}\n`);
    }
    if (line.trim() === "quit") break;
    rl.prompt();
  }
  rl.close();
  return 0;
}

async function main(): Promise<number> {
  const argv = process.argv.slice(2);
  let configPath: string | null = null;
  let scriptPath: string | null = null;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--config") configPath = argv[++i];
    else if (argv[i] === "--script") scriptPath = argv[++i];
    else usage();
  }
  if (!configPath) usage();

  const config = loadConfig(configPath);
  const programPath = path.isAbsolute(config.program)
    ? config.program
    : path.join(path.dirname(configPath), config.program);
  const client = new DebuggerClient(config, fs.readFileSync(programPath, "utf-8"));
  try {
    for (const out of await client.connect()) {
      process.stdout.write(`${out}\n`);
    }
    return scriptPath ? await runScript(client, scriptPath) : await interact(client);
  } finally {
    client.close();
  }
}

main().then(
  (code) => process.exit(code),
  (e) => {
    process.stderr.write(`fatal: ${(e as Error).message}\n`);
    process.exit(1);
  },
);
