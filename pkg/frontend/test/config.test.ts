import path from "path";
import { describe, expect, it } from "vitest";

import { ConfigError, loadConfig, parseConfig } from "../src/config.js";

const LISTING = path.join(__dirname, "fixtures", "listing5.json");

describe("configuration loading", () => {
  it("accepts the canonical file verbatim", () => {
    const cfg = loadConfig(LISTING);
    expect(cfg.program).toBe("temp_monitor.wast");
    expect(cfg.proxy).toEqual(["$isConnected", "$reqTemp"]);
    expect(cfg.devices).toHaveLength(2);
    expect(cfg.remote.name).toBe("monitor");
    expect(cfg.remote.host).toBe("IP adress");
    expect(cfg.remote.port).toBe(80);
    expect(cfg.remote.policy).toBe("single-stop");
    expect(cfg.local.name).toBe("local monitor");
    expect(cfg.local.port).toBe(8080);
    expect(cfg.local.policy).toBeNull();
  });

  it("rejects a missing program with the field path", () => {
    try {
      parseConfig({ devices: [{ name: "x", port: 1 }] });
      expect.unreachable();
    } catch (e) {
      expect(e).toBeInstanceOf(ConfigError);
      expect((e as ConfigError).field).toBe("program");
    }
  });

  it("rejects two host-less devices", () => {
    try {
      parseConfig({
        program: "p.wast",
        devices: [{ name: "a", port: 1 }, { name: "b", port: 2 }],
      });
      expect.unreachable();
    } catch (e) {
      expect((e as ConfigError).field).toBe("devices");
    }
  });

  it("rejects unknown policies", () => {
    expect(() => parseConfig({
      program: "p.wast",
      devices: [
        { name: "a", host: "h", port: 1, policy: "carry-on" },
        { name: "b", port: 2 },
      ],
    })).toThrow(/policy/);
  });

  it("rejects a non-integer port", () => {
    expect(() => parseConfig({
      program: "p.wast",
      devices: [{ name: "a", host: "h", port: "80" }, { name: "b", port: 2 }],
    })).toThrow(/port/);
  });
});
