// The view model never diverges from the last server response: the only
// way state changes is by storing what the server returned. A single
// pending flag enforces one in-flight event per session.

import type { SessionState } from "./types.js";

export interface ViewModel {
  state: SessionState | null;
  pending: boolean;
  error: string | null;
  errorRule: string | null;
  startedAt: number;
}

export function freshViewModel(now: number = Date.now()): ViewModel {
  return { state: null, pending: false, error: null, errorRule: null, startedAt: now };
}

export function withServerState(vm: ViewModel, state: SessionState): ViewModel {
  return { ...vm, state, pending: false, error: null, errorRule: null };
}

export function withError(vm: ViewModel, message: string, rule?: string): ViewModel {
  return { ...vm, pending: false, error: message, errorRule: rule ?? null };
}

export function beginEvent(vm: ViewModel): ViewModel {
  if (vm.pending) {
    throw new Error("an event is already in flight for this session");
  }
  return { ...vm, pending: true };
}
