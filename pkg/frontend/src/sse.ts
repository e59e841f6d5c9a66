// Minimal server-sent-events reader over fetch streaming, usable from both
// the browser and node test processes.

export interface SseHandle {
  close(): void;
  done: Promise<void>;
}

export function subscribeSse(
  url: string,
  onEvent: (data: unknown) => void,
  onError: (err: unknown) => void,
): SseHandle {
  const controller = new AbortController();
  const done = (async () => {
    const response = await fetch(url, {
      signal: controller.signal,
      headers: { Accept: "text/event-stream" },
    });
    if (!response.ok || !response.body) {
      throw new Error(`event stream failed: HTTP ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done: finished, value } = await reader.read();
      if (finished) {
        return;
      }
      buffer += decoder.decode(value, { stream: true });
      let boundary = buffer.indexOf("\n\n");
      while (boundary >= 0) {
        const chunk = buffer.slice(0, boundary);
        buffer = buffer.slice(boundary + 2);
        for (const line of chunk.split("\n")) {
          if (line.startsWith("data: ")) {
            try {
              onEvent(JSON.parse(line.slice("data: ".length)));
            } catch {
              // tolerate malformed keepalives
            }
          }
        }
        boundary = buffer.indexOf("\n\n");
      }
    }
  })().catch((err) => {
    if (!controller.signal.aborted) {
      onError(err);
    }
  });
  return {
    close: () => controller.abort(),
    done,
  };
}
