/**
 * Service client: session setup over HTTP, pose/frame exchange over the
 * WebSocket stream.
 *
 * The stream enforces the viewer-side pacing rule: at most one pose is in
 * flight, and while one is, newer poses overwrite a single pending slot
 * (latest wins). The pending pose goes out only after the in-flight frame
 * has been delivered, so the service sees at most one pose per displayed
 * frame.
 */

import {
  parseStreamMessage,
  type ErrorMessage,
  type FrameMessage,
  type ManifestInfo,
  type Pov,
  type SessionInfo,
  type SessionRequest,
  type StatsResponse,
} from "./protocol.js";

/** The subset of the WebSocket surface the stream needs; the browser's
 * WebSocket and the node "ws" client both provide it. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;
export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
  socketFactory?: SocketFactory;
  fetchFn?: FetchLike;
}

interface FrameWaiter {
  resolve: (frame: FrameMessage) => void;
  reject: (err: Error) => void;
}

export class Stream {
  onframe: ((frame: FrameMessage) => void) | null = null;
  onerror: ((err: ErrorMessage) => void) | null = null;
  onclose: (() => void) | null = null;
  /** Called for each pose actually written to the socket (parked poses that
   * get overwritten never fire it); this is what the recorder listens to. */
  onsend: ((pov: Pov) => void) | null = null;

  private inFlight = false;
  private pending: Pov | null = null;
  private waiters: FrameWaiter[] = [];
  private closed = false;
  private readonly openPromise: Promise<void>;

  constructor(private readonly socket: SocketLike) {
    this.openPromise = new Promise<void>((resolve, reject) => {
      socket.onopen = () => resolve();
      socket.onerror = () => reject(new Error("stream connection failed"));
    });
    this.openPromise.catch(() => undefined);
    socket.onmessage = (ev) => this.handleMessage(String(ev.data));
    socket.onclose = () => {
      this.closed = true;
      const waiters = this.waiters.splice(0);
      for (const w of waiters) {
        w.reject(new Error("stream closed"));
      }
      this.onclose?.();
    };
  }

  /** Resolves once the socket is open (poses sent earlier would be lost). */
  ready(): Promise<void> {
    return this.openPromise;
  }

  /** True while a pose is in flight and new poses would be parked. */
  get busy(): boolean {
    return this.inFlight;
  }

  /**
   * Send a pose, or park it if a frame is still in flight. Parking keeps
   * only the newest pose; stale ones are dropped, mirroring the service's
   * own latest-wins coalescing.
   */
  sendPov(pov: Pov): void {
    if (this.closed) {
      throw new Error("stream is closed");
    }
    if (this.inFlight) {
      this.pending = pov;
      return;
    }
    this.inFlight = true;
    this.socket.send(JSON.stringify(pov));
    this.onsend?.(pov);
  }

  /** The next frame message; rejects on a service error message. */
  nextFrame(): Promise<FrameMessage> {
    if (this.closed) {
      return Promise.reject(new Error("stream is closed"));
    }
    return new Promise<FrameMessage>((resolve, reject) => {
      this.waiters.push({ resolve, reject });
    });
  }

  /** Send one pose and resolve with the frame rendered for it. */
  async request(pov: Pov): Promise<FrameMessage> {
    const frame = this.nextFrame();
    this.sendPov(pov);
    return frame;
  }

  close(): void {
    this.closed = true;
    this.socket.close();
  }

  private handleMessage(text: string): void {
    const message = parseStreamMessage(text);
    this.inFlight = false;
    if (message.type === "frame") {
      this.waiters.shift()?.resolve(message);
      this.onframe?.(message);
    } else {
      this.waiters.shift()?.reject(new Error(message.error));
      this.onerror?.(message);
    }
    if (this.pending !== null) {
      const pov = this.pending;
      this.pending = null;
      this.sendPov(pov);
    }
  }
}

export class ViewerClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;
  private readonly socketFactory: SocketFactory;

  constructor(serviceUrl: string, opts: ClientOptions = {}) {
    this.base = serviceUrl.replace(/\/+$/, "");
    this.fetchFn = opts.fetchFn ?? ((url, init) => fetch(url, init));
    this.socketFactory =
      opts.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
  }

  async manifest(): Promise<ManifestInfo> {
    return (await this.getJson(`${this.base}/manifest`)) as ManifestInfo;
  }

  async createSession(req: SessionRequest = {}): Promise<SessionInfo> {
    const response = await this.fetchFn(`${this.base}/session`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!response.ok) {
      throw new Error(`session creation failed (${response.status}): ${await response.text()}`);
    }
    return (await response.json()) as SessionInfo;
  }

  async stats(sessionId: string): Promise<StatsResponse> {
    return (await this.getJson(`${this.base}/session/${sessionId}/stats`)) as StatsResponse;
  }

  /** Open the frame stream for a session; await stream.ready() before sending. */
  openStream(sessionId: string): Stream {
    const wsBase = this.base.replace(/^http/, "ws");
    return new Stream(this.socketFactory(`${wsBase}/session/${sessionId}/stream`));
  }

  private async getJson(url: string): Promise<unknown> {
    const response = await this.fetchFn(url);
    if (!response.ok) {
      throw new Error(`request failed (${response.status}): ${url}`);
    }
    return response.json();
  }
}
