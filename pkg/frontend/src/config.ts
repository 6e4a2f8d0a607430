/** Debugger configuration file: program, proxy list, device endpoints.
 *
 * {
 *   "program": "temp_monitor.wast",
 *   "proxy": ["$isConnected", "$reqTemp"],
 *   "devices": [
 *     {"name": "monitor", "host": "...", "port": 80, "policy": "single-stop"},
 *     {"name": "local monitor", "port": 8080}
 *   ]
 * }
 *
 * Exactly one device entry carries no host: that is the local
 * reconstruction VM. Its breakpoint policy is always plain pause.
 */

import fs from "fs";

export class ConfigError extends Error {
  constructor(public field: string, message: string) {
    super(`${field}: ${message}`);
  }
}

export interface DeviceEntry {
  name: string;
  host: string | null;
  port: number;
  policy: string | null;
}

export interface ClientConfig {
  program: string;
  proxy: string[];
  devices: DeviceEntry[];
  remote: DeviceEntry;
  local: DeviceEntry;
}

const POLICIES = ["single-stop", "remove-and-proceed", "pause"];

export function parseConfig(data: unknown): ClientConfig {
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new ConfigError("$", "configuration must be a JSON object");
  }
  const obj = data as Record<string, unknown>;

  const program = obj.program;
  if (typeof program !== "string" || !program) {
    throw new ConfigError("program", "required string naming the source file");
  }

  const proxy = obj.proxy ?? [];
  if (!Array.isArray(proxy) || proxy.some((p) => typeof p !== "string")) {
    throw new ConfigError("proxy", "must be a list of function symbols");
  }

  const rawDevices = obj.devices;
  if (!Array.isArray(rawDevices) || rawDevices.length === 0) {
    throw new ConfigError("devices", "must be a non-empty list");
  }
  const devices: DeviceEntry[] = rawDevices.map((d, i) => {
    if (typeof d !== "object" || d === null) {
      throw new ConfigError(`devices[${i}]`, "must be an object");
    }
    const entry = d as Record<string, unknown>;
    if (typeof entry.name !== "string") {
      throw new ConfigError(`devices[${i}].name`, "required string");
    }
    if (typeof entry.port !== "number" || !Number.isInteger(entry.port)) {
      throw new ConfigError(`devices[${i}].port`, "required integer");
    }
    const host = entry.host === undefined ? null : entry.host;
    if (host !== null && typeof host !== "string") {
      throw new ConfigError(`devices[${i}].host`, "must be a string");
    }
    const policy = entry.policy === undefined ? null : entry.policy;
    if (policy !== null
        && (typeof policy !== "string" || !POLICIES.includes(policy))) {
      throw new ConfigError(`devices[${i}].policy`,
        `must be one of ${POLICIES.join(", ")}`);
    }
    return { name: entry.name, host, port: entry.port, policy };
  });

  const locals = devices.filter((d) => d.host === null);
  if (locals.length !== 1) {
    throw new ConfigError("devices",
      "exactly one entry must omit host (the local reconstruction VM)");
  }
  const remotes = devices.filter((d) => d.host !== null);
  if (remotes.length !== 1) {
    throw new ConfigError("devices", "exactly one remote device is supported");
  }

  return {
    program: program as string,
    proxy: proxy as string[],
    devices,
    remote: remotes[0],
    local: locals[0],
  };
}

export function loadConfig(path: string): ClientConfig {
  let text: string;
  try {
    text = fs.readFileSync(path, "utf-8");
  } catch (e) {
    throw new ConfigError("$", `cannot read ${path}: ${(e as Error).message}`);
  }
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch (e) {
    throw new ConfigError("$", `invalid JSON: ${(e as Error).message}`);
  }
  return parseConfig(data);
}
