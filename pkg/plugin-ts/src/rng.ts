/**
 * Deterministic PRNG: splitmix64 over BigInt state.
 *
 * The state is a single u64, trivially serialized into checkpoints so a
 * resumed run continues the exact stream.  Quality is plenty for data
 * generation and noise; no crypto use.
 */

const MASK = (1n << 64n) - 1n;

export class SplitMix64 {
  state: bigint;

  constructor(seed: bigint | number | string) {
    this.state = BigInt(typeof seed === 'number' ? Math.floor(seed) : seed) & MASK;
  }

  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
    return z ^ (z >> 31n);
  }

  /** Uniform double in [0, 1) using the top 53 bits. */
  next(): number {
    return Number(this.nextU64() >> 11n) / 2 ** 53;
  }

  uniform(lo: number, hi: number): number {
    return lo + (hi - lo) * this.next();
  }

  /** Standard normal via Box-Muller (one value per call, no caching). */
  normal(): number {
    const u = Math.max(this.next(), Number.MIN_VALUE);
    const v = this.next();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  }

  saveState(): string {
    return this.state.toString();
  }

  static fromState(state: string): SplitMix64 {
    const rng = new SplitMix64(0);
    rng.state = BigInt(state) & MASK;
    return rng;
  }
}
