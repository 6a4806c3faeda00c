/**
 * Seeded RNG with named substreams.
 *
 * Everything the exporter randomizes (weight init, data synthesis, mixup
 * pairing) goes through one of these so a fixed seed reproduces a dump
 * bit for bit.  sfc32 is small, fast, and passes PractRand at the sizes
 * we draw; statistical quality beyond that is irrelevant here.
 */

function xmur3(str: string): () => number {
  let h = 1779033703 ^ str.length;
  for (let i = 0; i < str.length; i++) {
    h = Math.imul(h ^ str.charCodeAt(i), 3432918353);
    h = (h << 13) | (h >>> 19);
  }
  return () => {
    h = Math.imul(h ^ (h >>> 16), 2246822507);
    h = Math.imul(h ^ (h >>> 13), 3266489909);
    h ^= h >>> 16;
    return h >>> 0;
  };
}

export class Rng {
  private a: number;
  private b: number;
  private c: number;
  private d: number;
  private spareGauss: number | null = null;

  constructor(seed: number, ...labels: Array<string | number>) {
    const mix = xmur3(`${seed}|${labels.join("|")}`);
    this.a = mix();
    this.b = mix();
    this.c = mix();
    this.d = mix();
    for (let i = 0; i < 12; i++) this.next();
  }

  /** Uniform in [0, 1). */
  next(): number {
    this.a >>>= 0;
    this.b >>>= 0;
    this.c >>>= 0;
    this.d >>>= 0;
    let t = (this.a + this.b) | 0;
    this.a = this.b ^ (this.b >>> 9);
    this.b = (this.c + (this.c << 3)) | 0;
    this.c = (this.c << 21) | (this.c >>> 11);
    this.d = (this.d + 1) | 0;
    t = (t + this.d) | 0;
    this.c = (this.c + t) | 0;
    return (t >>> 0) / 4294967296;
  }

  /** Integer in [0, n). */
  int(n: number): number {
    return Math.floor(this.next() * n);
  }

  /** Standard normal via Box-Muller (cached spare). */
  gauss(): number {
    if (this.spareGauss !== null) {
      const v = this.spareGauss;
      this.spareGauss = null;
      return v;
    }
    let u = 0;
    while (u === 0) u = this.next();
    const r = Math.sqrt(-2 * Math.log(u));
    const theta = 2 * Math.PI * this.next();
    this.spareGauss = r * Math.sin(theta);
    return r * Math.cos(theta);
  }

  fillGauss(out: Float64Array, scale = 1): Float64Array {
    for (let i = 0; i < out.length; i++) out[i] = this.gauss() * scale;
    return out;
  }

  /**
   * Beta(alpha, alpha) by Johnk's algorithm; alpha = 1 degenerates to
   * uniform, which is what the mixup coefficient defaults to.
   */
  beta(alpha: number): number {
    if (alpha === 1) return this.next();
    for (;;) {
      const x = Math.pow(this.next(), 1 / alpha);
      const y = Math.pow(this.next(), 1 / alpha);
      if (x + y <= 1 && x + y > 0) return x / (x + y);
    }
  }

  /** Fisher-Yates shuffle, in place. */
  shuffle<T>(items: T[]): T[] {
    for (let i = items.length - 1; i > 0; i--) {
      const j = this.int(i + 1);
      const tmp = items[i];
      items[i] = items[j];
      items[j] = tmp;
    }
    return items;
  }
}
