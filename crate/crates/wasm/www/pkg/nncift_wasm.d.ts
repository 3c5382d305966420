/* tslint:disable */
/* eslint-disable */

/**
 * Predicted probe calls for estimating versus valuating everything.
 */
export function cost_table(method: string, m: number, n: number, u: number, prompts: number, scales: number): string;

/**
 * Trains the estimator on Q1 of a seeded cosine landscape and reports the
 * MSE of the network and both baselines per quadrant.
 */
export function quadrant_mse(m: number, n: number, dim: number, u: number, epochs: number, seed: number): string;

/**
 * Facility-location selection of candidate points covering target points,
 * both given as flat `[x0, y0, x1, y1, ...]` arrays. The kernel is a
 * Gaussian of distance with bandwidth `sigma`.
 */
export function select_points(candidates: Float64Array, targets: Float64Array, budget: number, sigma: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly cost_table: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly quadrant_mse: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly select_points: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
