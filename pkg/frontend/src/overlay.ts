/**
 * Per-frame timing accumulation for the live overlay.
 *
 * The aggregate must equal what GET /session/{id}/stats reports: means of
 * the per-frame values, the mean of per-frame miss rates, and the summed
 * prefetch load count. Keeping the arithmetic identical is what lets the
 * overlay be checked against the service's own totals.
 */

import type { AggregateStats, FrameTiming } from "./protocol.js";

export class StatsAccumulator {
  readonly perFrame: FrameTiming[] = [];

  add(timing: FrameTiming): void {
    this.perFrame.push({ ...timing });
  }

  clear(): void {
    this.perFrame.length = 0;
  }

  aggregate(): AggregateStats {
    const n = this.perFrame.length;
    if (n === 0) {
      return {
        frames: 0,
        mean_caching_ms: null,
        mean_rendering_ms: null,
        mean_latency_ms: null,
        miss_rate: null,
        prefetch_models_loaded: 0,
      };
    }
    const mean = (pick: (t: FrameTiming) => number): number =>
      this.perFrame.reduce((acc, t) => acc + pick(t), 0) / n;
    return {
      frames: n,
      mean_caching_ms: mean((t) => t.caching_ms),
      mean_rendering_ms: mean((t) => t.rendering_ms),
      mean_latency_ms: mean((t) => t.input_latency_ms),
      miss_rate: mean((t) => t.miss_rate),
      prefetch_models_loaded: this.perFrame.reduce(
        (acc, t) => acc + t.prefetch_models_loaded,
        0,
      ),
    };
  }
}

/** Bar lengths for one frame's caching/rendering/latency, as 0..1 of scale. */
export function barFractions(
  timing: FrameTiming,
  fullScaleMs: number,
): { caching: number; rendering: number; latency: number } {
  const clamp = (ms: number) => Math.min(Math.max(ms / fullScaleMs, 0), 1);
  return {
    caching: clamp(timing.caching_ms),
    rendering: clamp(timing.rendering_ms),
    latency: clamp(timing.input_latency_ms),
  };
}

/** Human-readable overlay lines for the latest frame plus running totals. */
export function overlayLines(latest: FrameTiming | null, agg: AggregateStats): string[] {
  const lines: string[] = [];
  if (latest) {
    lines.push(
      `frame: caching ${latest.caching_ms.toFixed(1)} ms, ` +
        `rendering ${latest.rendering_ms.toFixed(1)} ms, ` +
        `latency ${latest.input_latency_ms.toFixed(1)} ms`,
    );
  }
  if (agg.frames > 0 && agg.miss_rate !== null && agg.mean_latency_ms !== null) {
    lines.push(
      `${agg.frames} frames, mean latency ${agg.mean_latency_ms.toFixed(1)} ms, ` +
        `miss rate ${(100 * agg.miss_rate).toFixed(2)}%` +
        (agg.prefetch_models_loaded > 0
          ? `, ${agg.prefetch_models_loaded} blocks prefetched`
          : ""),
    );
  }
  return lines;
}
