/** Annotation overlay: one distinct color per cell class (matching the
 * dataset figure legends), polygons emitted as draw commands against a
 * minimal surface interface so rendering logic is testable headless. */

import type { AnnotationJson, CellClass } from "./types.js";
import type { ViewState } from "./viewstate.js";

export const CLASS_COLORS: Record<CellClass, string> = {
  immunopositive: "#a0531f", // DAB brown
  immunonegative: "#4650a8", // hematoxylin blue
  m0_no_staining: "#3b8f4a",
  m1_faint_incomplete: "#d7b43e",
  m2_moderate_complete: "#d77f2e",
  m3_intense_complete: "#c23b3b",
};

export interface DrawSurface {
  strokePolygon(points: [number, number][], color: string, width: number): void;
  fillPolygon(points: [number, number][], color: string, alpha: number): void;
}

export interface OverlayOptions {
  fillAlpha?: number;
  strokeWidth?: number;
  highlightId?: string | null;
}

export function renderOverlay(
  surface: DrawSurface,
  annotations: readonly AnnotationJson[],
  view: ViewState,
  viewportW: number,
  viewportH: number,
  options: OverlayOptions = {},
): number {
  const fillAlpha = options.fillAlpha ?? 0.25;
  const strokeWidth = options.strokeWidth ?? 1.5;
  let drawn = 0;
  for (const annotation of annotations) {
    const color = CLASS_COLORS[annotation.class];
    const screen = annotation.polygon.map(([x, y]) =>
      view.toScreen(x, y, viewportW, viewportH),
    );
    surface.fillPolygon(screen, color, fillAlpha);
    const width = annotation.id === options.highlightId ? strokeWidth * 2 : strokeWidth;
    surface.strokePolygon(screen, color, width);
    drawn++;
  }
  return drawn;
}

/** Hit test in image coordinates (even-odd), for edit/delete tools. */
export function annotationAt(
  annotations: readonly AnnotationJson[],
  x: number,
  y: number,
): AnnotationJson | null {
  for (let i = annotations.length - 1; i >= 0; i--) {
    const annotation = annotations[i]!;
    if (pointInPolygon(x, y, annotation.polygon)) {
      return annotation;
    }
  }
  return null;
}

function pointInPolygon(px: number, py: number, polygon: [number, number][]): boolean {
  let inside = false;
  const n = polygon.length;
  for (let i = 0; i < n; i++) {
    const [x1, y1] = polygon[i]!;
    const [x2, y2] = polygon[(i + 1) % n]!;
    if (y1 <= py !== y2 <= py) {
      const xCross = x1 + ((py - y1) * (x2 - x1)) / (y2 - y1);
      if (px < xCross) {
        inside = !inside;
      }
    }
  }
  return inside;
}
