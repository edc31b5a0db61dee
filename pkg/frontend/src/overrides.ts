/**
 * Replace the page's random sources with one shared seeded stream.
 *
 * Both overrides draw from the same stream on purpose: an extra draw
 * anywhere shifts everything after it, which is exactly how live pages
 * behave when user interaction changes the call count between loads.
 */

import { SeededStream } from "./lcg";

type AnyWindow = Window & typeof globalThis & Record<string, any>;

export function installSeededRandom(win: AnyWindow, stream: SeededStream): void {
  win.Math.random = function seededRandom(): number {
    return stream.random();
  };
}

function is64BitArray(array: any): boolean {
  const name = array?.constructor?.name;
  return name === "BigUint64Array" || name === "BigInt64Array";
}

export function installCryptoOverride(win: AnyWindow, stream: SeededStream): void {
  const getRandomValues = function <T>(array: T): T {
    const view = array as any;
    if (!view || typeof view.length !== "number") {
      return array;
    }
    const big = is64BitArray(view);
    for (let i = 0; i < view.length; i++) {
      if (big) {
        // high then low 32 bits, two draws per element
        const high = BigInt(stream.fillValue32());
        const low = BigInt(stream.fillValue32());
        view[i] = (high << 32n) | low;
      } else {
        // typed-array assignment truncates to the element width
        view[i] = stream.fillValue32();
      }
    }
    return array;
  };

  if (win.crypto) {
    try {
      win.crypto.getRandomValues = getRandomValues;
    } catch {
      Object.defineProperty(win.crypto, "getRandomValues", { value: getRandomValues });
    }
  }
  if (win.Crypto && win.Crypto.prototype) {
    try {
      win.Crypto.prototype.getRandomValues = getRandomValues;
    } catch {
      // prototype may be frozen; the instance override above still applies
    }
  }
}
