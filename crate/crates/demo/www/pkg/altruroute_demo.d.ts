/* tslint:disable */
/* eslint-disable */

export class WasmDemo {
    free(): void;
    [Symbol.dispose](): void;
    betaCurve(seed_index: number): string;
    edges(): string;
    /**
     * Builds the network and mines router costs; `params` is a JSON
     * object with any of `size`, `vehicles`, `horizon_ticks`,
     * `baseline_runs`, `seed`.
     */
    constructor(params: string);
    routes(seed: bigint): string;
    run(beta: number, seed_index: number): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_wasmdemo_free: (a: number, b: number) => void;
    readonly wasmdemo_betaCurve: (a: number, b: number) => [number, number, number, number];
    readonly wasmdemo_edges: (a: number) => [number, number, number, number];
    readonly wasmdemo_new: (a: number, b: number) => [number, number, number];
    readonly wasmdemo_routes: (a: number, b: bigint) => [number, number, number, number];
    readonly wasmdemo_run: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
