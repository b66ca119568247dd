/** Errors carrying the engine's stable machine-readable codes. */

export class EngineError extends Error {
  readonly code: string;

  constructor(code: string, message: string) {
    super(message);
    this.name = "EngineError";
    this.code = code;
  }
}

/** Raised before the engine is ever invoked (bad shapes, bad buffers). */
export class InvalidInputError extends EngineError {
  constructor(message: string, code = "invalid_value") {
    super(code, message);
    this.name = "InvalidInputError";
  }
}
