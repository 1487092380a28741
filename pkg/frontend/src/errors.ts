/** Typed failures surfaced by the bindings.
 *
 * Core failures keep the CLI's own diagnostic text and exit code so callers
 * can distinguish validation problems (1), I/O problems (2), and numerical
 * problems (3) without parsing stderr themselves.
 */

export class CoreError extends Error {
  readonly exitCode: number;
  readonly diagnostic: string;

  constructor(exitCode: number, diagnostic: string) {
    super(`core exited with code ${exitCode}: ${diagnostic.trim()}`);
    this.name = "CoreError";
    this.exitCode = exitCode;
    this.diagnostic = diagnostic;
  }
}

export class CoreValidationError extends CoreError {
  constructor(diagnostic: string) {
    super(1, diagnostic);
    this.name = "CoreValidationError";
  }
}

export class CoreIoError extends CoreError {
  constructor(diagnostic: string) {
    super(2, diagnostic);
    this.name = "CoreIoError";
  }
}

export class CoreNumericalError extends CoreError {
  constructor(diagnostic: string) {
    super(3, diagnostic);
    this.name = "CoreNumericalError";
  }
}

export function coreErrorFor(exitCode: number, diagnostic: string): CoreError {
  switch (exitCode) {
    case 1:
      return new CoreValidationError(diagnostic);
    case 2:
      return new CoreIoError(diagnostic);
    case 3:
      return new CoreNumericalError(diagnostic);
    default:
      return new CoreError(exitCode, diagnostic);
  }
}

export class MissingInputError extends Error {
  readonly path: string;

  constructor(path: string) {
    super(`input file is not readable: ${path}`);
    this.name = "MissingInputError";
    this.path = path;
  }
}

export class SessionClosedError extends Error {
  constructor() {
    super("session is closed");
    this.name = "SessionClosedError";
  }
}

export class UnknownImageError extends Error {
  readonly imageId: number;

  constructor(imageId: number) {
    super(`image ${imageId} is not part of the loaded annotations`);
    this.name = "UnknownImageError";
    this.imageId = imageId;
  }
}
