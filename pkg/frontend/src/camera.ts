/**
 * Orbit camera over the normalized scene cube.
 *
 * The camera circles a target point (default the cube center, the origin):
 * dragging changes the two orbit angles, the wheel changes the orbit
 * radius, and key panning shifts the target in the view plane. All methods
 * are pure state updates; pov() emits the pose message, always with a unit
 * direction.
 */

import { DEFAULT_FOV_Y, makePov, type Pov, type Vec3 } from "./protocol.js";

const MIN_POLAR = 0.05;
const MAX_POLAR = Math.PI - 0.05;
const WORLD_UP: Vec3 = [0, 1, 0];

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

function scale(v: Vec3, s: number): Vec3 {
  return [v[0] * s, v[1] * s, v[2] * s];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  if (!(n > 0)) {
    throw new Error("cannot normalize a zero vector");
  }
  return [v[0] / n, v[1] / n, v[2] / n];
}

export interface OrbitOptions {
  radius?: number;
  azimuth?: number;
  polar?: number;
  target?: Vec3;
  fovY?: number;
  minRadius?: number;
  maxRadius?: number;
}

export class OrbitCamera {
  radius: number;
  azimuth: number;
  polar: number;
  target: Vec3;
  fovY: number;
  readonly minRadius: number;
  readonly maxRadius: number;

  constructor(opts: OrbitOptions = {}) {
    this.radius = opts.radius ?? 3.0;
    this.azimuth = opts.azimuth ?? Math.PI / 2;
    this.polar = clampPolar(opts.polar ?? Math.PI / 2);
    this.target = opts.target ? [...opts.target] : [0, 0, 0];
    this.fovY = opts.fovY ?? DEFAULT_FOV_Y;
    this.minRadius = opts.minRadius ?? 0.2;
    this.maxRadius = opts.maxRadius ?? 20.0;
    this.radius = Math.min(Math.max(this.radius, this.minRadius), this.maxRadius);
  }

  position(): Vec3 {
    const s = Math.sin(this.polar);
    const offset: Vec3 = [
      this.radius * s * Math.cos(this.azimuth),
      this.radius * Math.cos(this.polar),
      this.radius * s * Math.sin(this.azimuth),
    ];
    return add(this.target, offset);
  }

  /** Pose message for the current state; direction is unit length. */
  pov(): Pov {
    const pos = this.position();
    return makePov(pos, sub(this.target, pos), WORLD_UP, this.fovY);
  }

  /** Drag by a screen delta in pixels: horizontal orbits, vertical tilts. */
  drag(dxPixels: number, dyPixels: number, pixelsPerHalfTurn = 400): void {
    const k = Math.PI / pixelsPerHalfTurn;
    this.azimuth += dxPixels * k;
    this.polar = clampPolar(this.polar - dyPixels * k);
  }

  /** Dolly by a wheel delta: positive moves away, negative moves closer. */
  dolly(wheelDelta: number, perNotch = 0.1): void {
    const factor = Math.exp(Math.sign(wheelDelta) * Math.min(Math.abs(wheelDelta), 3) * perNotch);
    this.radius = Math.min(Math.max(this.radius * factor, this.minRadius), this.maxRadius);
  }

  /** Pan the target in the view plane by fractions of the view extent. */
  pan(dxFraction: number, dyFraction: number): void {
    const pos = this.position();
    const forward = normalize(sub(this.target, pos));
    const right = normalize(cross(forward, WORLD_UP));
    const planeUp = cross(right, forward);
    const extent = this.radius * Math.tan((this.fovY * Math.PI) / 360);
    const shift = add(scale(right, dxFraction * extent), scale(planeUp, dyFraction * extent));
    this.target = add(this.target, shift);
  }
}

function clampPolar(polar: number): number {
  return Math.min(Math.max(polar, MIN_POLAR), MAX_POLAR);
}
