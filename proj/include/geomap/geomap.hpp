#pragma once

#include "geomap/backend.hpp"
#include "geomap/benchgen.hpp"
#include "geomap/detect.hpp"
#include "geomap/dki.hpp"
#include "geomap/error.hpp"
#include "geomap/fixture.hpp"
#include "geomap/geodb.hpp"
#include "geomap/geometry.hpp"
#include "geomap/hie.hpp"
#include "geomap/image.hpp"
#include "geomap/judge.hpp"
#include "geomap/lithology.hpp"
#include "geomap/model.hpp"
#include "geomap/parallel.hpp"
#include "geomap/peqa.hpp"
#include "geomap/pipeline.hpp"
#include "geomap/prompts.hpp"
#include "geomap/remote.hpp"
#include "geomap/reply.hpp"
#include "geomap/schema.hpp"
#include "geomap/scoring.hpp"
#include "geomap/templates.hpp"
#include "geomap/text.hpp"
#include "geomap/validate.hpp"
