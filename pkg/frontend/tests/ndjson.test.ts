import { describe, expect, it } from "vitest";

import { isHeartbeat, NdjsonParser, parseNdjson } from "../src/ndjson.js";

describe("NdjsonParser", () => {
  it("parses complete lines and buffers partial ones across chunks", () => {
    const parser = new NdjsonParser();
    expect(parser.push('{"seq":0}\n{"se')).toEqual([{ seq: 0 }]);
    expect(parser.push('q":1}\n')).toEqual([{ seq: 1 }]);
    expect(parser.flush()).toEqual([]);
  });

  it("flushes a trailing unterminated line", () => {
    const parser = new NdjsonParser();
    expect(parser.push('{"a":1}')).toEqual([]);
    expect(parser.flush()).toEqual([{ a: 1 }]);
    expect(parser.flush()).toEqual([]);
  });

  it("ignores blank lines", () => {
    expect(parseNdjson('\n{"a":1}\n\n{"b":2}\n')).toEqual([{ a: 1 }, { b: 2 }]);
  });

  it("distinguishes heartbeats from deltas", () => {
    expect(isHeartbeat({ seq: null, heartbeat: true })).toBe(true);
    expect(isHeartbeat({ seq: 0 })).toBe(false);
    expect(isHeartbeat(null)).toBe(false);
  });
});
