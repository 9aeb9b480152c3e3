import assert from "node:assert/strict";
import { test } from "node:test";

import { SseParser, connectStream } from "../src/sse.js";

test("parses complete events", () => {
    const parser = new SseParser();
    const events = parser.push('data: {"a":1}\n\ndata: {"a":2}\n\n');
    assert.deepEqual(events, ['{"a":1}', '{"a":2}']);
});

test("buffers events split across chunks", () => {
    const parser = new SseParser();
    assert.deepEqual(parser.push("data: {\"x\""), []);
    assert.deepEqual(parser.push(":5}\n"), []);
    assert.deepEqual(parser.push("\n"), ['{"x":5}']);
});

test("ignores keepalive comments", () => {
    const parser = new SseParser();
    assert.deepEqual(parser.push(": keepalive\n\ndata: ok\n\n"), ["ok"]);
});

test("joins multi-line data blocks", () => {
    const parser = new SseParser();
    assert.deepEqual(parser.push("data: one\ndata: two\n\n"), ["one\ntwo"]);
});

test("connectStream delivers data and retries after failure", async () => {
    let calls = 0;
    const fetchImpl = (async () => {
        calls += 1;
        if (calls === 1) {
            throw new Error("connection refused");
        }
        const body = new ReadableStream<Uint8Array>({
            start(controller) {
                controller.enqueue(new TextEncoder().encode("data: hello\n\n"));
                controller.close();
            },
        });
        return new Response(body, { status: 200 });
    }) as typeof fetch;

    const got: string[] = [];
    let errors = 0;
    const stop = await new Promise<() => void>((resolve) => {
        const stopFn = connectStream(
            "http://unused/stream",
            {
                onData: (d) => {
                    got.push(d);
                    resolve(stopFn);
                },
                onError: () => {
                    errors += 1;
                },
            },
            { retryBaseMs: 10, fetchImpl },
        );
    });
    stop();
    assert.deepEqual(got, ["hello"]);
    assert.ok(errors >= 1, "first connection failure must be surfaced");
    assert.ok(calls >= 2, "must reconnect after failure");
});
