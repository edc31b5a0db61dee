/**
 * Deterministic random stream installed over the page's own generators.
 *
 * State advances as (9301 * state + 49297) mod 233280 and each draw is
 * state / 233280, seeded from the capture's epoch seconds, so every
 * replay of the same memento sees the same "random" values.
 */

export const MULTIPLIER = 9301;
export const INCREMENT = 49297;
export const MODULUS = 233280;

const TWO_32 = 4294967296;

export class SeededStream {
  state: number;

  constructor(seed: number) {
    if (!Number.isFinite(seed) || seed < 0) {
      throw new Error(`seed must be a non-negative number, got ${seed}`);
    }
    this.state = Math.floor(seed) % MODULUS;
  }

  nextState(): number {
    this.state = (MULTIPLIER * this.state + INCREMENT) % MODULUS;
    return this.state;
  }

  random(): number {
    return this.nextState() / MODULUS;
  }

  /** One crypto-style element: the integer part of 2^32 times a draw. */
  fillValue32(): number {
    return Math.floor(TWO_32 * this.random());
  }
}

/**
 * First n draws rendered exactly to 12 decimal places, one per line.
 *
 * Rendering is integer-only (scale by 10^12, divide, round half up) so
 * the replay engine's generator produces byte-identical files.
 */
export function goldenVectorLines(seed: number, n: number): string[] {
  const stream = new SeededStream(seed);
  const modulus = BigInt(MODULUS);
  const scale = 10n ** 12n;
  const lines: string[] = [];
  for (let i = 0; i < n; i++) {
    const scaled = BigInt(stream.nextState()) * scale;
    let q = scaled / modulus;
    const r = scaled % modulus;
    if (2n * r >= modulus) {
      q += 1n;
    }
    lines.push("0." + q.toString().padStart(12, "0"));
  }
  return lines;
}
