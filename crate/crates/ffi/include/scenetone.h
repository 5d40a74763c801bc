#ifndef SCENETONE_H
#define SCENETONE_H

#pragma once

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Most events a single firmware call can return.
 */
#define ST_MAX_EVENTS_PER_CALL 5

typedef enum StStatus {
  ST_STATUS_OK = 0,
  ST_STATUS_NULL_POINTER = 1,
  ST_STATUS_INVALID_UTF8 = 2,
  ST_STATUS_INVALID_ARGUMENT = 3,
  ST_STATUS_INVALID_STATE = 4,
  ST_STATUS_BACKEND = 5,
  ST_STATUS_PANIC = 6,
} StStatus;

typedef enum StEnvelopeKind {
  ST_ENVELOPE_KIND_EQUAL_POWER = 0,
  ST_ENVELOPE_KIND_POWER_LAW = 1,
} StEnvelopeKind;

/**
 * The controller firmware model.
 */
typedef struct StFirmware StFirmware;

/**
 * A session run in virtual time.
 */
typedef struct StSession StSession;

/**
 * Crossfade envelope; `alpha` is read only for the power-law family.
 */
typedef struct StEnvelope {
  enum StEnvelopeKind kind;
  double alpha;
} StEnvelope;

/**
 * A debounced controller event. Buttons: keys 0, guitar 1, bass 2,
 * percussion 3, capture 4.
 */
typedef struct StDeviceEvent {
  uint8_t button;
  bool down;
  uint64_t at_ms;
} StDeviceEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next call into the library on this thread.
 */
const char *st_last_error(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void st_string_free(char *s);

/**
 * # Safety
 * `data` and `len` must be exactly as returned by this library.
 */
void st_bytes_free(uint8_t *data, size_t len);

/**
 * Crossfade length in seconds for a tempo in beats per minute.
 *
 * # Safety
 * `out_seconds` must be writable.
 */
enum StStatus st_crossfade_window(double bpm, double *out_seconds);

/**
 * Outgoing and incoming gains at sample `n` of a `len`-sample window.
 *
 * # Safety
 * `out_gain_out` and `out_gain_in` must be writable.
 */
enum StStatus st_envelope_gains(struct StEnvelope envelope,
                                size_t n,
                                size_t len,
                                double *out_gain_out,
                                double *out_gain_in);

/**
 * Opens a session. `config_toml` may be NULL for defaults; environment
 * overrides and API keys are read from the process environment.
 *
 * # Safety
 * `config_toml` is NULL or a NUL-terminated string; `out_session` is writable.
 */
enum StStatus st_session_new(const char *config_toml, struct StSession **out_session);

/**
 * # Safety
 * `session` is NULL or a live handle; it must not be used afterwards.
 */
void st_session_free(struct StSession *session);

/**
 * Queues a JPEG capture at virtual time `at_ms` with a comma-separated
 * instrument list such as `"keys,guitar"`.
 *
 * # Safety
 * `jpeg` points to `len` readable bytes; `instruments` is NUL-terminated.
 */
enum StStatus st_session_capture(struct StSession *session,
                                 const uint8_t *jpeg,
                                 size_t len,
                                 const char *instruments,
                                 uint64_t at_ms);

/**
 * Queues a control at virtual time `at_ms`, given as JSON, e.g.
 * `{"action":"set_auto_mix","enabled":true}` or `{"action":"master"}`.
 *
 * # Safety
 * `control_json` is NUL-terminated.
 */
enum StStatus st_session_control(struct StSession *session,
                                 const char *control_json,
                                 uint64_t at_ms);

/**
 * Runs queued work until nothing is left.
 *
 * # Safety
 * `session` is a live handle.
 */
enum StStatus st_session_run(struct StSession *session);

/**
 * # Safety
 * `session` is a live handle; `out_count` is writable.
 */
enum StStatus st_session_section_count(struct StSession *session, size_t *out_count);

/**
 * The full rendered session as a 16-bit stereo WAV. Release with
 * [`st_bytes_free`].
 *
 * # Safety
 * `session` is a live handle; both out pointers are writable.
 */
enum StStatus st_session_render_wav(struct StSession *session, uint8_t **out_data, size_t *out_len);

/**
 * The session event log as JSON lines. Release with [`st_string_free`].
 *
 * # Safety
 * `session` is a live handle; `out_jsonl` is writable.
 */
enum StStatus st_session_event_log(struct StSession *session, char **out_jsonl);

/**
 * State snapshot at the current virtual time as JSON. Release with
 * [`st_string_free`].
 *
 * # Safety
 * `session` is a live handle; `out_json` is writable.
 */
enum StStatus st_session_state_json(struct StSession *session, char **out_json);

/**
 * # Safety
 * `out_firmware` is writable.
 */
enum StStatus st_firmware_new(struct StFirmware **out_firmware);

/**
 * # Safety
 * `firmware` is NULL or a live handle; it must not be used afterwards.
 */
void st_firmware_free(struct StFirmware *firmware);

/**
 * Feeds one raw contact level. Debounced events confirmed up to `at_ms` are
 * written to `out_events` (room for [`ST_MAX_EVENTS_PER_CALL`] suffices).
 *
 * # Safety
 * `firmware` is a live handle; `out_events` has room for `capacity` events.
 */
enum StStatus st_firmware_edge(struct StFirmware *firmware,
                               uint8_t button,
                               bool pressed,
                               uint64_t at_ms,
                               struct StDeviceEvent *out_events,
                               size_t capacity,
                               size_t *out_count);

/**
 * Confirms every pending level as if the contacts then held still.
 *
 * # Safety
 * As for [`st_firmware_edge`].
 */
enum StStatus st_firmware_settle(struct StFirmware *firmware,
                                 struct StDeviceEvent *out_events,
                                 size_t capacity,
                                 size_t *out_count);

/**
 * Applies a host display line (`D ...`).
 *
 * # Safety
 * `firmware` is a live handle; `line` is NUL-terminated.
 */
enum StStatus st_firmware_host_line(struct StFirmware *firmware, const char *line);

/**
 * LED mask currently shown: instruments in button order, then capture.
 *
 * # Safety
 * `firmware` is a live handle; `out_mask` is writable.
 */
enum StStatus st_firmware_leds(struct StFirmware *firmware, uint8_t *out_mask);

/**
 * Wire form of an event (`B <idx> <d|u> <ms>\n`). Release with
 * [`st_string_free`].
 *
 * # Safety
 * `out_line` is writable.
 */
enum StStatus st_device_event_encode(struct StDeviceEvent event, char **out_line);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCENETONE_H */
