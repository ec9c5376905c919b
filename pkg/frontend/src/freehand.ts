/** Freehand stroke capture: dense pointer polylines simplified with a
 * fixed 0.5 px tolerance before they become annotation polygons, keeping
 * documents small with sub-pixel fidelity at full zoom. */

import type { Vertex } from "./types.js";

export const SIMPLIFY_TOLERANCE_PX = 0.5;

function perpendicularDistance(point: Vertex, a: Vertex, b: Vertex): number {
  const [px, py] = point;
  const [ax, ay] = a;
  const [bx, by] = b;
  const dx = bx - ax;
  const dy = by - ay;
  const lengthSq = dx * dx + dy * dy;
  if (lengthSq === 0) {
    return Math.hypot(px - ax, py - ay);
  }
  return Math.abs(dy * px - dx * py + bx * ay - by * ax) / Math.sqrt(lengthSq);
}

/** Ramer-Douglas-Peucker on an open polyline. */
export function simplifyPolyline(points: Vertex[], tolerance = SIMPLIFY_TOLERANCE_PX): Vertex[] {
  if (points.length <= 2) {
    return points.slice();
  }
  const first = points[0]!;
  const last = points[points.length - 1]!;
  let worst = 0;
  let worstIndex = 0;
  for (let i = 1; i < points.length - 1; i++) {
    const d = perpendicularDistance(points[i]!, first, last);
    if (d > worst) {
      worst = d;
      worstIndex = i;
    }
  }
  if (worst <= tolerance) {
    return [first, last];
  }
  const left = simplifyPolyline(points.slice(0, worstIndex + 1), tolerance);
  const right = simplifyPolyline(points.slice(worstIndex), tolerance);
  return [...left.slice(0, -1), ...right];
}

export class FreehandCapture {
  private points: Vertex[] = [];
  private active = false;

  get isActive(): boolean {
    return this.active;
  }

  start(x: number, y: number): void {
    this.points = [[x, y]];
    this.active = true;
  }

  extend(x: number, y: number): void {
    if (!this.active) return;
    this.points.push([x, y]);
  }

  /** Close the stroke into a simplified polygon; null if degenerate. */
  finish(): Vertex[] | null {
    this.active = false;
    const simplified = simplifyPolyline(this.points);
    this.points = [];
    return simplified.length >= 3 ? simplified : null;
  }

  cancel(): void {
    this.active = false;
    this.points = [];
  }
}
