import { describe, expect, it } from "vitest";

import { cellKey, pointerToCell, preloadOrder } from "../src/grid.js";

describe("pointerToCell", () => {
  it("maps the top-left corner to cell (0, 0)", () => {
    expect(pointerToCell(0, 0, 480, 480, 12)).toEqual({ gx: 0, gy: 0 });
  });

  it("maps the bottom-right pixel to the last cell (clamped)", () => {
    expect(pointerToCell(479, 479, 480, 480, 12)).toEqual({ gx: 11, gy: 11 });
    // even exactly on the edge stays in range
    expect(pointerToCell(480, 480, 480, 480, 12)).toEqual({ gx: 11, gy: 11 });
  });

  it("maps the exact view center to cell (6, 6) at grid 12", () => {
    expect(pointerToCell(240, 240, 480, 480, 12)).toEqual({ gx: 6, gy: 6 });
  });

  it("clamps negative coordinates to cell 0", () => {
    expect(pointerToCell(-5, -1, 480, 480, 12)).toEqual({ gx: 0, gy: 0 });
  });

  it("handles non-square views", () => {
    expect(pointerToCell(639, 0, 640, 360, 12)).toEqual({ gx: 11, gy: 0 });
    expect(pointerToCell(0, 359, 640, 360, 12)).toEqual({ gx: 0, gy: 11 });
  });

  it("is consistent with cell boundaries", () => {
    const w = 480;
    const cellSize = w / 12;
    for (let gx = 0; gx < 12; gx++) {
      expect(pointerToCell(gx * cellSize, 0, w, w, 12).gx).toBe(gx);
      expect(pointerToCell((gx + 1) * cellSize - 0.001, 0, w, w, 12).gx).toBe(gx);
    }
  });
});

describe("preloadOrder", () => {
  it("covers every cell exactly once", () => {
    const order = preloadOrder(12);
    expect(order).toHaveLength(144);
    expect(new Set(order.map(cellKey)).size).toBe(144);
  });

  it("starts near the grid center", () => {
    const order = preloadOrder(12);
    const first = order[0];
    expect(Math.abs(first.gx - 5.5)).toBeLessThanOrEqual(0.5);
    expect(Math.abs(first.gy - 5.5)).toBeLessThanOrEqual(0.5);
  });

  it("orders by nondecreasing distance from the center", () => {
    const n = 12;
    const c = (n - 1) / 2;
    const order = preloadOrder(n);
    const d = order.map((cell) => (cell.gx - c) ** 2 + (cell.gy - c) ** 2);
    for (let i = 1; i < d.length; i++) {
      expect(d[i]).toBeGreaterThanOrEqual(d[i - 1]);
    }
  });
});
