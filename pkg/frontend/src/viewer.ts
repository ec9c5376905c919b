/** Tile compositing: fetch only visible tiles at the current level, draw
 * what is cached, and cover gaps with the best coarser tile already in
 * the cache so zooming stays responsive while fine tiles load. */

import type { ApiClient } from "./api.js";
import type { TileAddress, TilePlacement, ViewState } from "./viewstate.js";

export interface TileSurface {
  drawTile(url: string, dx: number, dy: number, dw: number, dh: number): void;
}

function tileKey(slideId: string, t: TileAddress): string {
  return `${slideId}/${t.level}/${t.tx}_${t.ty}`;
}

export class TileViewer {
  private readonly api: ApiClient;
  private readonly loaded = new Set<string>();
  private readonly pending = new Set<string>();
  onTileLoaded: (() => void) | null = null;
  /** Loader hook: marks a tile loaded once its bytes are available. The
   * browser host preloads an Image; tests resolve immediately. */
  loadTile: (url: string) => Promise<void> = async () => {};

  constructor(api: ApiClient) {
    this.api = api;
  }

  isLoaded(slideId: string, t: TileAddress): boolean {
    return this.loaded.has(tileKey(slideId, t));
  }

  private requestTile(slideId: string, t: TileAddress): void {
    const key = tileKey(slideId, t);
    if (this.loaded.has(key) || this.pending.has(key)) return;
    this.pending.add(key);
    const url = this.api.tileUrl(slideId, t.level, t.tx, t.ty);
    void this.loadTile(url)
      .then(() => {
        this.loaded.add(key);
        this.onTileLoaded?.();
      })
      .catch(() => {
        // a failed tile just stays missing; the next render retries it
      })
      .finally(() => this.pending.delete(key));
  }

  /** Best already-loaded coarser stand-in covering a missing tile. */
  private coarseFallback(
    slideId: string,
    view: ViewState,
    placement: TilePlacement,
  ): TilePlacement | null {
    const maxLevel = view.pyramid.levels.length - 1;
    let { level, tx, ty, dx, dy, dw, dh } = placement;
    while (level < maxLevel) {
      level += 1;
      tx = Math.floor(tx / 2);
      ty = Math.floor(ty / 2);
      if (this.loaded.has(tileKey(slideId, { level, tx, ty }))) {
        // the coarse tile covers 2^(level-placement.level) fine tiles;
        // draw it stretched over the whole covered screen area
        const factor = 2 ** (level - placement.level);
        const tile = view.pyramid.tile_size;
        const downsample = 2 ** placement.level;
        const originX = tx * factor * tile * downsample;
        const originY = ty * factor * tile * downsample;
        const scale = view.zoom * downsample;
        const offsetX = dx - (placement.tx * tile * downsample - originX) * view.zoom;
        const offsetY = dy - (placement.ty * tile * downsample - originY) * view.zoom;
        return {
          level,
          tx,
          ty,
          dx: offsetX,
          dy: offsetY,
          dw: tile * factor * scale,
          dh: tile * factor * scale,
        };
      }
    }
    return null;
  }

  /** Draw the viewport; returns the tiles drawn (fine or fallback). */
  render(
    surface: TileSurface,
    view: ViewState,
    viewportW: number,
    viewportH: number,
  ): { drawn: TilePlacement[]; missing: TileAddress[] } {
    const drawn: TilePlacement[] = [];
    const missing: TileAddress[] = [];
    for (const placement of view.visibleTiles(viewportW, viewportH)) {
      this.requestTile(view.slideId, placement);
      if (this.loaded.has(tileKey(view.slideId, placement))) {
        surface.drawTile(
          this.api.tileUrl(view.slideId, placement.level, placement.tx, placement.ty),
          placement.dx,
          placement.dy,
          placement.dw,
          placement.dh,
        );
        drawn.push(placement);
      } else {
        missing.push(placement);
        const fallback = this.coarseFallback(view.slideId, view, placement);
        if (fallback) {
          surface.drawTile(
            this.api.tileUrl(view.slideId, fallback.level, fallback.tx, fallback.ty),
            fallback.dx,
            fallback.dy,
            fallback.dw,
            fallback.dh,
          );
          drawn.push(fallback);
        }
      }
    }
    return { drawn, missing };
  }
}
