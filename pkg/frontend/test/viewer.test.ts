import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { TileViewer } from "../src/viewer.js";
import type { TileSurface } from "../src/viewer.js";
import { ViewState } from "../src/viewstate.js";
import { FakeBackend } from "./fakebackend.js";

class RecordingSurface implements TileSurface {
  tiles: { url: string; dw: number; dh: number }[] = [];

  drawTile(url: string, _dx: number, _dy: number, dw: number, dh: number): void {
    this.tiles.push({ url, dw, dh });
  }
}

function setup() {
  const backend = new FakeBackend();
  backend.pyramids.set("s1", {
    levels: [
      [1000, 800],
      [500, 400],
      [250, 200],
    ],
    tile_size: 256,
  });
  const api = new ApiClient("", backend.fetch);
  const view = new ViewState("s1", backend.pyramids.get("s1")!);
  return { api, view };
}

describe("tile viewer", () => {
  it("draws nothing before tiles load, then fine tiles after", async () => {
    const { api, view } = setup();
    const viewer = new TileViewer(api);
    const loads: string[] = [];
    let resolveAll: (() => void)[] = [];
    viewer.loadTile = (url) =>
      new Promise((resolve) => {
        loads.push(url);
        resolveAll.push(resolve);
      });

    view.setZoom(1);
    view.centerX = 128;
    view.centerY = 128;
    const surface = new RecordingSurface();
    const first = viewer.render(surface, view, 256, 256);
    expect(first.drawn).toHaveLength(0);
    expect(first.missing).toHaveLength(4);
    expect(loads).toHaveLength(4); // only visible tiles requested

    resolveAll.forEach((r) => r());
    await Promise.resolve();
    await Promise.resolve();

    const second = viewer.render(surface, view, 256, 256);
    expect(second.missing).toHaveLength(0);
    expect(second.drawn).toHaveLength(4);
  });

  it("covers missing fine tiles with a loaded coarse ancestor", async () => {
    const { api, view } = setup();
    const viewer = new TileViewer(api);
    viewer.loadTile = async (url) => {
      if (!url.includes("/tiles/2/")) {
        throw new Error("fine tiles withheld");
      }
    };

    // warm the coarse cache: zoomed out, level 2 is a single tile
    view.zoomToFit(200, 200);
    const warm = new RecordingSurface();
    viewer.render(warm, view, 200, 200);
    await Promise.resolve();
    await Promise.resolve();
    expect(viewer.isLoaded("s1", { level: 2, tx: 0, ty: 0 })).toBe(true);

    // zoom in: fine tiles missing, coarse stand-in drawn meanwhile
    view.setZoom(1);
    view.centerX = 100;
    view.centerY = 100;
    const surface = new RecordingSurface();
    const result = viewer.render(surface, view, 200, 200);
    expect(result.missing.length).toBeGreaterThan(0);
    expect(surface.tiles.some((t) => t.url.includes("/tiles/2/0_0"))).toBe(true);
  });
});
