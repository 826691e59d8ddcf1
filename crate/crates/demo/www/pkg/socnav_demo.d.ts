/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    modelField(resolution: number, theta: number): Float64Array;
    newScenario(seed: number): string;
    constructor(seed: number);
    proxyField(resolution: number): Float64Array;
    scenarioJson(): string;
    startTraining(samples: number, layers: number, hidden: number, learning_rate: number, seed: number): void;
    trainEpoch(): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_modelField: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_newScenario: (a: number, b: number) => [number, number, number, number];
    readonly demo_proxyField: (a: number, b: number) => [number, number, number, number];
    readonly demo_scenarioJson: (a: number) => [number, number];
    readonly demo_startTraining: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly demo_trainEpoch: (a: number) => [number, number, number, number];
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
