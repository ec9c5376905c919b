/** Viewport state over a tile pyramid: continuous zoom, level selection,
 * visible-tile computation and tool gating.
 *
 * Zoom is expressed as displayed pixels per full-resolution pixel, so
 * zoom = 1 shows level 0 at native scale. Drawing and editing are only
 * allowed there: annotations are made at the highest magnification.
 */

import type { PyramidJson } from "./types.js";

export type Tool = "pan" | "draw" | "edit" | "delete";

export interface TileAddress {
  level: number;
  tx: number;
  ty: number;
}

export interface TilePlacement extends TileAddress {
  /** Destination rectangle in screen pixels. */
  dx: number;
  dy: number;
  dw: number;
  dh: number;
}

export class ViewState {
  readonly slideId: string;
  readonly pyramid: PyramidJson;
  zoom = 1;
  centerX: number;
  centerY: number;
  tool: Tool = "pan";
  activeClass: string | null = null;

  constructor(slideId: string, pyramid: PyramidJson) {
    this.slideId = slideId;
    this.pyramid = pyramid;
    const level0 = pyramid.levels[0];
    if (!level0) {
      throw new Error("pyramid has no levels");
    }
    this.centerX = level0[0] / 2;
    this.centerY = level0[1] / 2;
  }

  get slideWidth(): number {
    return this.pyramid.levels[0]![0];
  }

  get slideHeight(): number {
    return this.pyramid.levels[0]![1];
  }

  /** Finest level whose downsample still meets the requested zoom. */
  levelFor(zoom: number): number {
    const maxLevel = this.pyramid.levels.length - 1;
    if (zoom >= 1) return 0;
    const level = Math.floor(Math.log2(1 / zoom));
    return Math.min(Math.max(level, 0), maxLevel);
  }

  get level(): number {
    return this.levelFor(this.zoom);
  }

  /** True when annotation tools may modify geometry (full resolution). */
  get drawingEnabled(): boolean {
    return this.zoom >= 1;
  }

  setTool(tool: Tool): void {
    if (tool !== "pan" && !this.drawingEnabled) {
      throw new Error("annotation tools require maximum zoom (full resolution)");
    }
    this.tool = tool;
  }

  setZoom(zoom: number): void {
    this.zoom = Math.max(zoom, 1e-6);
    if (this.tool !== "pan" && !this.drawingEnabled) {
      this.tool = "pan";
    }
  }

  panBy(dxScreen: number, dyScreen: number): void {
    this.centerX -= dxScreen / this.zoom;
    this.centerY -= dyScreen / this.zoom;
  }

  /** Zoom that fits the whole slide inside a viewport. */
  zoomToFit(viewportW: number, viewportH: number): void {
    this.zoom = Math.min(viewportW / this.slideWidth, viewportH / this.slideHeight);
    this.centerX = this.slideWidth / 2;
    this.centerY = this.slideHeight / 2;
  }

  /** Initial level choice: the finest one fitting the viewport whole. */
  fitLevel(viewportW: number, viewportH: number): number {
    for (let level = 0; level < this.pyramid.levels.length; level++) {
      const [w, h] = this.pyramid.levels[level]!;
      if (Math.max(w, h) <= Math.max(viewportW, viewportH) && w <= viewportW && h <= viewportH) {
        return level;
      }
    }
    return this.pyramid.levels.length - 1;
  }

  /** Screen coordinates of a full-resolution point. */
  toScreen(x: number, y: number, viewportW: number, viewportH: number): [number, number] {
    return [
      (x - this.centerX) * this.zoom + viewportW / 2,
      (y - this.centerY) * this.zoom + viewportH / 2,
    ];
  }

  /** Full-resolution coordinates of a screen point. */
  toImage(sx: number, sy: number, viewportW: number, viewportH: number): [number, number] {
    return [
      (sx - viewportW / 2) / this.zoom + this.centerX,
      (sy - viewportH / 2) / this.zoom + this.centerY,
    ];
  }

  /** Tiles of the current level intersecting the viewport, with their
   * screen placement. Only visible tiles are listed. */
  visibleTiles(viewportW: number, viewportH: number): TilePlacement[] {
    const level = this.level;
    const [levelW, levelH] = this.pyramid.levels[level]!;
    const tile = this.pyramid.tile_size;
    const downsample = 2 ** level;
    const scale = this.zoom * downsample; // screen px per level px

    const [left, top] = this.toImage(0, 0, viewportW, viewportH);
    const [right, bottom] = this.toImage(viewportW, viewportH, viewportW, viewportH);
    const lx0 = Math.max(0, Math.floor(left / downsample / tile));
    const ly0 = Math.max(0, Math.floor(top / downsample / tile));
    const lx1 = Math.min(Math.ceil(levelW / tile) - 1, Math.floor((right / downsample) / tile));
    const ly1 = Math.min(Math.ceil(levelH / tile) - 1, Math.floor((bottom / downsample) / tile));

    const placements: TilePlacement[] = [];
    for (let ty = ly0; ty <= ly1; ty++) {
      for (let tx = lx0; tx <= lx1; tx++) {
        const x0 = tx * tile;
        const y0 = ty * tile;
        const w = Math.min(tile, levelW - x0);
        const h = Math.min(tile, levelH - y0);
        const [dx, dy] = this.toScreen(x0 * downsample, y0 * downsample, viewportW, viewportH);
        placements.push({ level, tx, ty, dx, dy, dw: w * scale, dh: h * scale });
      }
    }
    return placements;
  }
}
