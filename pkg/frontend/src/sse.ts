// Minimal server-sent-events client over fetch streaming. Node 20 has no
// EventSource, so using fetch keeps one code path for the browser and the
// node test harness.

export interface StreamHandlers {
    onData(data: string): void;
    onOpen?(): void;
    onError?(err: unknown): void;
}

export interface StreamOptions {
    retryBaseMs?: number;
    retryMaxMs?: number;
    fetchImpl?: typeof fetch;
}

/** Stateful SSE block parser. Feed raw text chunks, get back the data
 *  payloads of completed events; comment lines (keepalives) are dropped. */
export class SseParser {
    private buffer = "";

    push(chunk: string): string[] {
        this.buffer += chunk;
        const events: string[] = [];
        let sep;
        while ((sep = this.buffer.indexOf("\n\n")) >= 0) {
            const block = this.buffer.slice(0, sep);
            this.buffer = this.buffer.slice(sep + 2);
            const data = block
                .split("\n")
                .filter((line) => line.startsWith("data:"))
                .map((line) => line.slice(5).trimStart())
                .join("\n");
            if (data.length > 0) {
                events.push(data);
            }
        }
        return events;
    }
}

/** Connect to an SSE endpoint and keep reconnecting with exponential
 *  backoff until the returned stop function is called. */
export function connectStream(
    url: string,
    handlers: StreamHandlers,
    options: StreamOptions = {},
): () => void {
    const retryBase = options.retryBaseMs ?? 1000;
    const retryMax = options.retryMaxMs ?? 15000;
    const fetchImpl = options.fetchImpl ?? fetch;
    let stopped = false;
    let controller: AbortController | null = null;

    const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

    (async () => {
        let backoff = retryBase;
        while (!stopped) {
            controller = new AbortController();
            try {
                const resp = await fetchImpl(url, {
                    signal: controller.signal,
                    headers: { accept: "text/event-stream" },
                });
                if (!resp.ok || resp.body === null) {
                    throw new Error(`stream failed: ${resp.status}`);
                }
                handlers.onOpen?.();
                backoff = retryBase;
                const parser = new SseParser();
                const decoder = new TextDecoder();
                const reader = resp.body.getReader();
                for (;;) {
                    const { value, done } = await reader.read();
                    if (done) break;
                    for (const data of parser.push(decoder.decode(value, { stream: true }))) {
                        handlers.onData(data);
                    }
                }
                throw new Error("stream ended");
            } catch (err) {
                if (stopped) return;
                handlers.onError?.(err);
                await sleep(backoff);
                backoff = Math.min(backoff * 2, retryMax);
            }
        }
    })();

    return () => {
        stopped = true;
        controller?.abort();
    };
}
