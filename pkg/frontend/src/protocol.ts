/**
 * Message and file schemas shared with the render service.
 *
 * Everything here mirrors the service's JSON contracts (see ../API.md) and
 * the trajectory file format (see ../FORMAT.md). This module is pure data
 * handling: no sockets, no DOM.
 */

export type Vec3 = [number, number, number];

/** Camera pose message; also one line of a trajectory file. */
export interface Pov {
  pos: Vec3;
  dir: Vec3;
  up: Vec3;
  fov_y?: number;
}

/** Per-frame timing record, as the service reports it. */
export interface FrameTiming {
  caching_ms: number;
  rendering_ms: number;
  input_latency_ms: number;
  prefetch_models_loaded: number;
  miss_rate: number;
}

export interface FrameMessage {
  type: "frame";
  png: string;
  width: number;
  height: number;
  timing: FrameTiming;
  miss_rate: number;
  visible: string[];
}

export interface ErrorMessage {
  type: "error";
  error: string;
}

export type StreamMessage = FrameMessage | ErrorMessage;

export interface ManifestInfo {
  kind: string;
  levels: number;
  micro_dims: number;
  volume_dims: number[];
  bounds: number[][];
  degree: number;
  block_counts: Record<string, number>;
  store_bytes: number;
  value_range: [number, number];
  tf_presets: string[];
}

export interface SessionRequest {
  tf?: string | object;
  width?: number;
  height?: number;
  sample_distance?: number;
  o_max?: number;
  cache_capacity?: number;
  prefetch?: "off" | "static" | "linear";
}

export interface SessionInfo {
  session_id: string;
  width: number;
  height: number;
  prefetch: string;
  cache_capacity: number;
}

export interface AggregateStats {
  frames: number;
  mean_caching_ms: number | null;
  mean_rendering_ms: number | null;
  mean_latency_ms: number | null;
  miss_rate: number | null;
  prefetch_models_loaded: number;
}

export interface StatsResponse {
  frames: number;
  aggregate: AggregateStats;
  cache: Record<string, number>;
  per_frame: FrameTiming[];
}

export const DEFAULT_FOV_Y = 45.0;

function norm(v: Vec3): number {
  return Math.hypot(v[0], v[1], v[2]);
}

/**
 * Build a pose message with a unit-length direction.
 *
 * The viewer must never put a non-unit direction on the wire; every pose
 * goes through here before being sent or recorded. fov_y is carried only
 * when it differs from the default, matching the trajectory file format.
 */
export function makePov(pos: Vec3, dir: Vec3, up: Vec3, fovY: number = DEFAULT_FOV_Y): Pov {
  const n = norm(dir);
  if (!(n > 0)) {
    throw new Error("pov direction must be non-zero");
  }
  if (!(norm(up) > 0)) {
    throw new Error("pov up must be non-zero");
  }
  const pov: Pov = {
    pos: [pos[0], pos[1], pos[2]],
    dir: [dir[0] / n, dir[1] / n, dir[2] / n],
    up: [up[0], up[1], up[2]],
  };
  if (fovY !== DEFAULT_FOV_Y) {
    pov.fov_y = fovY;
  }
  return pov;
}

function asVec3(value: unknown, what: string): Vec3 {
  if (!Array.isArray(value) || value.length !== 3 || !value.every((c) => typeof c === "number" && Number.isFinite(c))) {
    throw new Error(`${what} must be a 3-vector of finite numbers`);
  }
  return [value[0], value[1], value[2]];
}

/** Validate one parsed pose object against the trajectory schema. */
export function validatePov(obj: unknown): Pov {
  if (typeof obj !== "object" || obj === null) {
    throw new Error("pose must be an object");
  }
  const rec = obj as Record<string, unknown>;
  const pov: Pov = {
    pos: asVec3(rec.pos, "pos"),
    dir: asVec3(rec.dir, "dir"),
    up: asVec3(rec.up, "up"),
  };
  if (rec.fov_y !== undefined) {
    if (typeof rec.fov_y !== "number" || !Number.isFinite(rec.fov_y) || rec.fov_y <= 0) {
      throw new Error("fov_y must be a positive number");
    }
    pov.fov_y = rec.fov_y;
  }
  return pov;
}

/** Serialize poses as the trajectory file format: one JSON object per line. */
export function toTrajectoryLines(povs: readonly Pov[]): string {
  return povs
    .map((p) => {
      const obj: Record<string, unknown> = { pos: p.pos, dir: p.dir, up: p.up };
      if (p.fov_y !== undefined && p.fov_y !== DEFAULT_FOV_Y) {
        obj.fov_y = p.fov_y;
      }
      return JSON.stringify(obj);
    })
    .join("\n") + (povs.length ? "\n" : "");
}

/** Parse a trajectory file, skipping blank lines, validating every pose. */
export function parseTrajectoryLines(text: string): Pov[] {
  const povs: Pov[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i += 1) {
    const line = (lines[i] ?? "").trim();
    if (!line) {
      continue;
    }
    let obj: unknown;
    try {
      obj = JSON.parse(line);
    } catch (exc) {
      throw new Error(`bad trajectory line ${i + 1}: ${String(exc)}`);
    }
    povs.push(validatePov(obj));
  }
  return povs;
}

function validateTiming(value: unknown): FrameTiming {
  if (typeof value !== "object" || value === null) {
    throw new Error("frame timing must be an object");
  }
  const rec = value as Record<string, unknown>;
  const fields = [
    "caching_ms",
    "rendering_ms",
    "input_latency_ms",
    "prefetch_models_loaded",
    "miss_rate",
  ] as const;
  for (const f of fields) {
    if (typeof rec[f] !== "number" || !Number.isFinite(rec[f] as number)) {
      throw new Error(`frame timing field ${f} must be a finite number`);
    }
  }
  return {
    caching_ms: rec.caching_ms as number,
    rendering_ms: rec.rendering_ms as number,
    input_latency_ms: rec.input_latency_ms as number,
    prefetch_models_loaded: rec.prefetch_models_loaded as number,
    miss_rate: rec.miss_rate as number,
  };
}

/** Parse and validate one server message off the stream. */
export function parseStreamMessage(text: string): StreamMessage {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (exc) {
    throw new Error(`unparsable stream message: ${String(exc)}`);
  }
  if (typeof obj !== "object" || obj === null) {
    throw new Error("stream message must be an object");
  }
  const rec = obj as Record<string, unknown>;
  if (rec.type === "error") {
    if (typeof rec.error !== "string") {
      throw new Error("error message must carry an error string");
    }
    return { type: "error", error: rec.error };
  }
  if (rec.type !== "frame") {
    throw new Error(`unknown stream message type ${JSON.stringify(rec.type)}`);
  }
  if (typeof rec.png !== "string" || typeof rec.width !== "number" || typeof rec.height !== "number") {
    throw new Error("frame message missing png/width/height");
  }
  if (!Array.isArray(rec.visible) || !rec.visible.every((k) => typeof k === "string")) {
    throw new Error("frame message visible must be a list of block keys");
  }
  if (typeof rec.miss_rate !== "number") {
    throw new Error("frame message missing miss_rate");
  }
  return {
    type: "frame",
    png: rec.png,
    width: rec.width,
    height: rec.height,
    timing: validateTiming(rec.timing),
    miss_rate: rec.miss_rate,
    visible: rec.visible.slice() as string[],
  };
}
