/* tslint:disable */
/* eslint-disable */

export function density_grid(family: string, rho: number, p1: number, p2: number, m: number): Float64Array;

/**
 * `[analytic lower, analytic upper, numeric lower, numeric upper, lambda2]`
 * tail dependence of the two-dimensional HB-N copula.
 */
export function hb_n_tail(alpha: number, beta: number, rho: number): Float64Array;

/**
 * `n` pairs of copula observations, flattened `[u1, v1, u2, v2, ...]`.
 */
export function simulate_pairs(family: string, rho: number, p1: number, p2: number, n: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly density_grid: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly hb_n_tail: (a: number, b: number, c: number) => [number, number, number, number];
    readonly simulate_pairs: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_exn_store: (a: number) => void;
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
