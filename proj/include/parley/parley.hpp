#pragma once

#include "parley/error.hpp"
#include "parley/text.hpp"
#include "parley/core.hpp"
#include "parley/audio.hpp"
#include "parley/localization.hpp"
#include "parley/services.hpp"
#include "parley/prompts.hpp"
#include "parley/agents.hpp"
#include "parley/segmenter.hpp"
#include "parley/speak.hpp"
#include "parley/engine.hpp"
#include "parley/store.hpp"
#include "parley/session.hpp"
#include "parley/stats.hpp"
#include "parley/eval.hpp"
#include "parley/config.hpp"
