/**
 * Geometry helpers shared by the canvas renderer and tests.
 *
 * Pixel rounding must agree bit for bit with the CSS the service exports,
 * so px() uses the same half-up floor the backend applies when it converts
 * normalized coordinates to device pixels.
 */

import type { PixelRect, Rect, ScreenSpec } from './types';

/** Normalized coordinate to device pixels, rounding half up. */
export function px(value: number, sizePx: number): number {
  return Math.floor(value * sizePx + 0.5);
}

/** Center/extent rect to the pixel box used for absolute positioning. */
export function rectToPixels(rect: Rect, screen: ScreenSpec): PixelRect {
  return {
    left: px(rect.cx - rect.w / 2, screen.width_px),
    top: px(rect.cy - rect.h / 2, screen.height_px),
    width: px(rect.w, screen.width_px),
    height: px(rect.h, screen.height_px),
  };
}

export function rectLeft(rect: Rect): number {
  return rect.cx - rect.w / 2;
}

export function rectRight(rect: Rect): number {
  return rect.cx + rect.w / 2;
}

export function rectTop(rect: Rect): number {
  return rect.cy - rect.h / 2;
}

export function rectBottom(rect: Rect): number {
  return rect.cy + rect.h / 2;
}

/**
 * Height that keeps a width/height aspect fixed for a given normalized
 * width, accounting for the non-square normalized unit cell.
 */
export function aspectHeight(w: number, aspect: number, screen: ScreenSpec): number {
  return w / (aspect * (screen.height_px / screen.width_px));
}

/** Point-in-rect test in normalized coordinates, edges inclusive. */
export function rectContains(rect: Rect, x: number, y: number): boolean {
  return (
    x >= rectLeft(rect) && x <= rectRight(rect) && y >= rectTop(rect) && y <= rectBottom(rect)
  );
}
