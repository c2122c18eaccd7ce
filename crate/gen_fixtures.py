#!/usr/bin/env python3
"""One-shot generator: parses the appendix scenario tables out of paper.md and
emits the 22 fixture JSON files plus catalogs. Deleted after use; the JSON data
files are the deliverable."""
import json
import re
import os
import sys

ROOT = os.path.dirname(os.path.abspath(__file__))
PAPER = os.path.join(ROOT, "paper.md")
OUT = os.path.join(ROOT, "crates", "iamlens", "data")

VENDOR_DOCS = {
    "AmazonEKSServicePolicy": ["eks:*", "ec2:DescribeSubnets", "ec2:DescribeVpcs"],
    "AmazonRoute53ReadOnlyAccess": ["route53:Get*", "route53:List*", "route53:TestDNSAnswer"],
    "AmazonKinesisFullAccess": ["kinesis:*"],
    "AmazonMQFullAccess": ["mq:*", "ec2:DescribeSecurityGroups"],
    "AmazonS3TablesFullAccess": ["s3tables:*"],
}

# Concrete actions that the wildcard vendor documents cover; the simulation
# and fuzz catalogs need concrete names.
VENDOR_CONCRETE = {
    "AmazonEKSServicePolicy": ["eks:ListClusters", "eks:DescribeCluster", "ec2:DescribeSubnets", "ec2:DescribeVpcs"],
    "AmazonRoute53ReadOnlyAccess": ["route53:ListHostedZones", "route53:GetHostedZone", "route53:TestDNSAnswer"],
    "AmazonKinesisFullAccess": ["kinesis:ListStreams", "kinesis:CreateStream"],
    "AmazonMQFullAccess": ["mq:ListBrokers", "mq:CreateBroker", "ec2:DescribeSecurityGroups"],
    "AmazonS3TablesFullAccess": ["s3tables:ListTableBuckets", "s3tables:CreateTableBucket"],
}

# Historical version sets for selected customer policies (scenario, policy)
# -> ordered {vid: actions-or-None}; None = the appendix action list (always
# the default version). Non-contiguous ids model deleted versions.
VERSION_PLANS = {
    (4, "S4_AMP_PolicyA"): {"default": "v2", "versions": {"v1": ["iam:ListUserPolicies"], "v2": None, "v3": ["iam:ListUserPolicies", "iam:ListAttachedGroupPolicies", "iam:GetRolePolicy", "iam:ListAttachedUserPolicies"]}},
    (4, "S4_AMP_PolicyD"): {"default": "v4", "versions": {"v2": ["iam:ListRoles"], "v4": None}},
    (12, "S12_AMP_PolicyD"): {"default": "v2", "versions": {"v1": ["iam:GetGroupPolicy"], "v2": None}},
    (13, "S13_AMP_PolicyG"): {"default": "v3", "versions": {"v1": ["iam:ListRolePolicies"], "v3": None}},
    (14, "S14_AMP_PolicyG"): {"default": "v1", "versions": {"v1": None, "v2": ["iam:ListRolePolicies", "iam:GetPolicyVersion", "iam:ListEntitiesForPolicy", "iam:ListPolicies", "iam:DeletePolicy"]}},
    (19, "S19_AMP_PolicyG"): {"default": "v2", "versions": {"v1": ["iam:ListRolePolicies"], "v2": None}},
    (20, "S20_AMP_PolicyJ"): {"default": "v2", "versions": {"v1": ["tax:GetExemptions"], "v2": None}},
}

READONLY_VERBS = ("Get", "List", "Describe", "BatchGet", "Test", "Lookup", "Search", "View")

# Read-only actions that still need mandatory parameters, so no-args fuzzing
# cannot invoke them.
ARG_REQUIRED_READONLY = {
    "s3:ListBucket": "--bucket <bucket-name>",
    "iam:GetUserPolicy": "--user-name <user> --policy-name <policy>",
    "iam:GetGroupPolicy": "--group-name <group> --policy-name <policy>",
    "iam:GetRolePolicy": "--role-name <role> --policy-name <policy>",
    "iam:GetPolicy": "--policy-arn <arn>",
    "iam:GetPolicyVersion": "--policy-arn <arn> --version-id <vid>",
    "iam:GetGroup": "--group-name <group>",
    "iam:ListGroupsForUser": "--user-name <user>",
    "iam:ListUserPolicies": "--user-name <user>",
    "iam:ListAttachedUserPolicies": "--user-name <user>",
    "iam:ListGroupPolicies": "--group-name <group>",
    "iam:ListAttachedGroupPolicies": "--group-name <group>",
    "iam:ListRolePolicies": "--role-name <role>",
    "iam:ListAttachedRolePolicies": "--role-name <role>",
    "iam:ListPolicyVersions": "--policy-arn <arn>",
    "iam:ListEntitiesForPolicy": "--policy-arn <arn>",
    "eks:DescribeCluster": "--name <cluster>",
    "route53:GetHostedZone": "--id <zone-id>",
    "tax:GetExemptions": "--account <id>",
    "codeguru:GetCodeGuruFreeTrialSummary": "--type <service>",
    "s3-object-lambda:GetObjectAcl": "--bucket <ap> --key <key>",
    "lookoutequipment:DescribeDataset": "--dataset-name <name>",
    "iotanalytics:DescribeChannel": "--channel-name <name>",
    "scn:DescribeInstance": "--instance-id <id>",
    "ram:GetPermission": "--permission-arn <arn>",
    "codedeploy:BatchGetApplications": "--application-names <names>",
    "lookoutequipment:ListInferenceEvents": "--inference-scheduler-name <name>",
}


def unescape(s):
    return s.replace("\\_", "_")


def parse_appendix(text):
    lines = text.splitlines()
    # Find the appendix proper (second block of "Scenario N:" subsections).
    start = next(i for i, l in enumerate(lines) if "\\section*{Chapter 5 resources}" in l)
    scenarios = {}
    cur_scenario = None
    cur_entity = None  # dict with kind/name/...
    section = None  # 'inline' | 'attached'
    cur_policy = None  # (kind, name) collecting actions

    re_scn = re.compile(r"\\subsection\*\{Scenario (\d+):?\}")
    re_user = re.compile(r"\\textbf\{User: ([^}]+)\}")
    re_section = re.compile(r"\\item \\textbf\{(Inline Policies|Attached Managed Policies):\}")
    re_group = re.compile(r"\\item \\textbf\{Group: (\S+) \(Includes:? ([^)]+)\)\}")
    re_role = re.compile(r"\\item \\textbf\{Role: (\S+) \(Assumable by: ([^)]+)\)\}")
    re_vendor = re.compile(r"\\item \\textbf\{([A-Za-z0-9]+) \(AWS\)\}")
    re_policy = re.compile(r"\\item \\textbf\{([A-Za-z0-9_\\]+):\}")
    re_action = re.compile(r"\\item \\texttt\{([^}]+)\}(?:\s*\((\w+)\))?")

    def new_entity(kind, name, extra=None):
        nonlocal cur_entity, section, cur_policy
        cur_entity = {"kind": kind, "name": name, "inline": {}, "inline_order": [],
                      "attached": [], "extra": extra}
        cur_scenario["entities"].append(cur_entity)
        section = None
        cur_policy = None

    for line in lines[start:]:
        m = re_scn.search(line)
        if m:
            sid = int(m.group(1))
            cur_scenario = {"id": sid, "entities": []}
            scenarios[sid] = cur_scenario
            cur_entity = None
            section = None
            cur_policy = None
            continue
        if cur_scenario is None:
            continue
        m = re_user.search(line)
        if m and "\\item" not in line:
            new_entity("user", unescape(m.group(1)))
            continue
        m = re_group.search(line)
        if m:
            new_entity("group", unescape(m.group(1)), extra=unescape(m.group(2)))
            continue
        m = re_role.search(line)
        if m:
            new_entity("role", unescape(m.group(1)), extra=unescape(m.group(2)))
            continue
        m = re_section.search(line)
        if m:
            section = "inline" if m.group(1).startswith("Inline") else "attached"
            cur_policy = None
            continue
        m = re_vendor.search(line)
        if m and section == "attached":
            cur_entity["attached"].append({"name": m.group(1), "vendor": True})
            cur_policy = None
            continue
        m = re_policy.search(line)
        if m and section is not None:
            name = unescape(m.group(1))
            if section == "inline":
                cur_entity["inline"][name] = []
                cur_entity["inline_order"].append(name)
                cur_policy = ("inline", name)
            else:
                entry = {"name": name, "vendor": False, "actions": []}
                cur_entity["attached"].append(entry)
                cur_policy = ("attached", entry)
            continue
        m = re_action.search(line)
        if m and cur_policy is not None:
            action = m.group(1).strip()
            # Markers appear either outside the braces "(G)" or inside
            # "iam:GetAccountAuthorizationDetails (All)".
            action = re.sub(r"\s*\((\w+)\)$", "", action)
            action = action.strip()
            if action.startswith("Iam:"):
                action = "iam:" + action[4:]
            kind, target = cur_policy
            if kind == "inline":
                cur_entity["inline"][target].append(action)
            else:
                target["actions"].append(action)
            continue
    return scenarios


def check(scenarios):
    assert sorted(scenarios) == list(range(1, 23)), sorted(scenarios)
    def users(s): return [e for e in scenarios[s]["entities"] if e["kind"] == "user"]
    def groups(s): return [e for e in scenarios[s]["entities"] if e["kind"] == "group"]
    def roles(s): return [e for e in scenarios[s]["entities"] if e["kind"] == "role"]

    assert len(users(1)) == 1 and len(groups(1)) == 1 and len(roles(1)) == 1
    assert users(1)[0]["inline"]["S1_IP_UserA"] == [
        "iam:ListGroupsForUser", "iam:ListAttachedUserPolicies", "iam:GetUserPolicy"]
    assert [a["name"] for a in roles(1)[0]["attached"]] == ["AmazonEKSServicePolicy"]
    assert len(roles(8)) == 4
    assert [r["extra"] for r in roles(8)] == ["S8_UserA", "S8_RoleA", "S8_RoleB", "S8_RoleC"]
    assert len(roles(11)) == 4
    assert roles(11)[3]["attached"][0]["actions"] == ["iam:GetAccountAuthorizationDetails"]
    assert len(users(15)) == 4 and len(groups(15)) == 4 and len(roles(15)) == 4
    assert len(users(16)) == 4 and len(roles(16)) == 9
    assert len(roles(17)) == 4
    assert len(roles(18)) == 12
    gaad_role = [r for r in roles(18) if "iam:GetAccountAuthorizationDetails" in r["inline"].get("S18_IP_UserD_RoleD", [])]
    assert len(gaad_role) == 1 and gaad_role[0]["extra"] == "S18_UserD_RoleC"
    assert len(roles(20)) == 9
    assert len(roles(21)) == 2
    assert len(roles(22)) == 0 and len(groups(22)) == 1
    s22_actions = []
    for e in scenarios[22]["entities"]:
        for acts in e["inline"].values():
            s22_actions += acts
        for a in e["attached"]:
            s22_actions += a.get("actions", [])
    assert len(s22_actions) == 11, s22_actions
    # S5 duplicate attachments: PolicyA on user+group, PolicyB on user+role.
    s5_attach = [(e["name"], a["name"]) for e in scenarios[5]["entities"] for a in e["attached"]]
    assert ("S5_UserA", "S5_AMP_PolicyA") in s5_attach and ("S5_GroupA", "S5_AMP_PolicyA") in s5_attach
    assert ("S5_UserA", "S5_AMP_PolicyB") in s5_attach and ("S5_RoleA", "S5_AMP_PolicyB") in s5_attach
    # S21 has the simulate grant on an attached managed policy.
    s21u = users(21)[0]
    assert any("iam:SimulatePrincipalPolicy" in a["actions"] for a in s21u["attached"] if not a["vendor"])
    print("appendix parse checks OK")


def doc(actions):
    return {"Version": "2012-10-17",
            "Statement": [{"Effect": "Allow", "Action": sorted(actions), "Resource": ["*"]}]}


def build_fixture(sid, scn):
    acct = "1000000000%02d" % sid
    arn = lambda ty, name: "arn:aws:iam::%s:%s/%s" % (acct, ty, name)
    users, groups, roles, policies = {}, {}, {}, {}
    vendor_used = set()

    def policy_arn(entry):
        if entry["vendor"]:
            return "arn:aws:iam::aws:policy/%s" % entry["name"]
        return arn("policy", entry["name"])

    def register_managed(entry):
        parn = policy_arn(entry)
        if entry["vendor"]:
            vendor_used.add(entry["name"])
            if parn not in policies:
                policies[parn] = {
                    "name": entry["name"], "arn": parn, "is_aws_managed": True,
                    "default_version_id": "v1",
                    "versions": {"v1": doc(VENDOR_DOCS[entry["name"]])}}
            return parn
        if parn in policies:
            return parn  # first definition wins for duplicate names (S5)
        plan = VERSION_PLANS.get((sid, entry["name"]))
        if plan:
            versions = {vid: doc(acts if acts is not None else entry["actions"])
                        for vid, acts in plan["versions"].items()}
            default = plan["default"]
        else:
            versions = {"v1": doc(entry["actions"])}
            default = "v1"
        policies[parn] = {"name": entry["name"], "arn": parn, "is_aws_managed": False,
                          "default_version_id": default, "versions": versions}
        return parn

    for e in scn["entities"]:
        inline = {name: doc(e["inline"][name]) for name in e["inline_order"]}
        attached = [register_managed(a) for a in e["attached"]]
        if e["kind"] == "user":
            users[e["name"]] = {
                "name": e["name"], "arn": arn("user", e["name"]), "group_names": [],
                "inline_policies": inline, "attached": attached}
        elif e["kind"] == "group":
            member = e["extra"]
            groups[e["name"]] = {
                "name": e["name"], "arn": arn("group", e["name"]),
                "inline_policies": inline, "attached": attached}
            users[member]["group_names"].append(e["name"])
        else:
            principal = e["extra"]
            ptype = "role" if "Role" in principal.split("_")[-1] else "user"
            trust = {"Version": "2012-10-17", "Statement": [{
                "Effect": "Allow", "Action": ["sts:AssumeRole"],
                "Principal": {"AWS": arn(ptype, principal)}}]}
            roles[e["name"]] = {
                "name": e["name"], "arn": arn("role", e["name"]), "trust_policy": trust,
                "inline_policies": inline, "attached": attached}

    credentials = []
    for idx, uname in enumerate(users):
        suffix = uname.split("_")[-1].upper()  # USERA
        credentials.append({
            "access_key_id": "AKIA%02d%s" % (sid, suffix.ljust(14, "0"))[:20],
            "secret_key": "fixture-secret-%02d-%s" % (sid, suffix.lower()),
            "user": uname})

    return {"account_id": acct, "users": users, "groups": groups, "roles": roles,
            "managed_policies": policies, "credentials": credentials}, vendor_used


def collect_actions(fixtures):
    acts = set()
    for fx, _ in fixtures.values():
        for pool in ("users", "groups", "roles"):
            for ent in fx[pool].values():
                for d in ent["inline_policies"].values():
                    for st in d["Statement"]:
                        acts.update(a for a in st["Action"] if "*" not in a)
        for pol in fx["managed_policies"].values():
            for d in pol["versions"].values():
                for st in d["Statement"]:
                    acts.update(a for a in st["Action"] if "*" not in a)
    for concrete in VENDOR_CONCRETE.values():
        acts.update(concrete)
    return acts


def catalog_entry(action):
    verb = action.split(":", 1)[1]
    read_only = verb.startswith(READONLY_VERBS)
    if read_only and action not in ARG_REQUIRED_READONLY:
        invocation = "no-args"
    elif action in ARG_REQUIRED_READONLY:
        invocation = ARG_REQUIRED_READONLY[action]
    else:
        invocation = "--cli-input-json <parameters>"
    return {"action": action, "read_only": read_only, "invocation": invocation}


SEED_EXTRA = """
s3:ListAllMyBuckets s3:GetObject s3:PutObject s3:DeleteObject s3:GetBucketPolicy s3:PutBucketPolicy s3:GetBucketAcl s3:DeleteBucket s3:GetBucketLocation s3:ListObjectsV2
ec2:DescribeVolumes ec2:DescribeSnapshots ec2:CreateSnapshot ec2:CopySnapshot ec2:ModifySnapshotAttribute ec2:GetPasswordData ec2:DescribeKeyPairs ec2:CreateKeyPair ec2:StartInstances ec2:StopInstances ec2:TerminateInstances ec2:AuthorizeSecurityGroupIngress ec2:RevokeSecurityGroupIngress ec2:DescribeNetworkInterfaces ec2:DescribeRegions ec2:DescribeAvailabilityZones ec2:DescribeImages ec2:DescribeRouteTables ec2:DescribeVpcEndpoints ec2:CreateVpc ec2:DeleteVpc
iam:ListUsers iam:GetUser iam:CreateUser iam:DeleteUser iam:ListGroups iam:CreateGroup iam:DeleteGroup iam:AddUserToGroup iam:RemoveUserFromGroup iam:CreateRole iam:DeleteRole iam:UpdateAssumeRolePolicy iam:PassRole iam:PutUserPolicy iam:PutGroupPolicy iam:PutRolePolicy iam:DeleteUserPolicy iam:DeleteRolePolicy iam:AttachUserPolicy iam:AttachGroupPolicy iam:AttachRolePolicy iam:DetachUserPolicy iam:DetachRolePolicy iam:CreatePolicy iam:DeletePolicy iam:CreatePolicyVersion iam:DeletePolicyVersion iam:SetDefaultPolicyVersion iam:CreateAccessKey iam:ListAccessKeys iam:DeleteAccessKey iam:UpdateAccessKey iam:CreateLoginProfile iam:UpdateLoginProfile iam:DeleteLoginProfile iam:ListMFADevices iam:DeactivateMFADevice iam:GetAccountSummary iam:GetCredentialReport iam:GenerateCredentialReport iam:ListInstanceProfiles iam:GetInstanceProfile iam:TagUser iam:TagRole iam:GetContextKeysForPrincipalPolicy iam:SimulateCustomPolicy
sts:AssumeRole sts:GetCallerIdentity sts:GetSessionToken sts:GetFederationToken sts:DecodeAuthorizationMessage
lambda:ListFunctions lambda:GetFunction lambda:InvokeFunction lambda:UpdateFunctionCode lambda:UpdateFunctionConfiguration lambda:DeleteFunction lambda:ListLayers lambda:GetLayerVersion lambda:AddPermission lambda:GetPolicy lambda:ListEventSourceMappings
rds:DescribeDBInstances rds:DescribeDBClusters rds:DescribeDBSnapshots rds:DescribeDBSecurityGroups rds:CreateDBSnapshot rds:ModifyDBInstance rds:DeleteDBInstance rds:RestoreDBInstanceFromDBSnapshot rds:DescribeDBClusterSnapshots rds:DescribeDBSubnetGroups
dynamodb:ListTables dynamodb:DescribeTable dynamodb:Scan dynamodb:Query dynamodb:GetItem dynamodb:PutItem dynamodb:DeleteItem dynamodb:CreateTable dynamodb:DeleteTable dynamodb:DescribeContinuousBackups dynamodb:ListBackups
kms:ListKeys kms:DescribeKey kms:ListAliases kms:Decrypt kms:Encrypt kms:GenerateDataKey kms:CreateKey kms:ScheduleKeyDeletion kms:DisableKey kms:PutKeyPolicy kms:GetKeyPolicy kms:ListGrants kms:CreateGrant
secretsmanager:ListSecrets secretsmanager:GetSecretValue secretsmanager:DescribeSecret secretsmanager:CreateSecret secretsmanager:PutSecretValue secretsmanager:DeleteSecret secretsmanager:GetResourcePolicy
ssm:DescribeParameters ssm:GetParameter ssm:GetParameters ssm:GetParametersByPath ssm:PutParameter ssm:DeleteParameter ssm:SendCommand ssm:StartSession ssm:DescribeInstanceInformation ssm:ListCommands ssm:GetCommandInvocation ssm:ListDocuments
sns:ListTopics sns:GetTopicAttributes sns:ListSubscriptions sns:Subscribe sns:Unsubscribe
sqs:ListQueues sqs:GetQueueAttributes sqs:ReceiveMessage sqs:SendMessage sqs:PurgeQueue sqs:DeleteQueue sqs:CreateQueue
logs:DescribeLogGroups logs:DescribeLogStreams logs:GetLogEvents logs:FilterLogEvents logs:CreateLogGroup logs:DeleteLogGroup logs:PutRetentionPolicy logs:PutSubscriptionFilter logs:DeleteLogStream
cloudtrail:DescribeTrails cloudtrail:GetTrailStatus cloudtrail:LookupEvents cloudtrail:StopLogging cloudtrail:StartLogging cloudtrail:DeleteTrail cloudtrail:PutEventSelectors cloudtrail:UpdateTrail
cloudwatch:DescribeAlarms cloudwatch:GetMetricData cloudwatch:ListMetrics cloudwatch:PutMetricAlarm cloudwatch:DeleteAlarms cloudwatch:DisableAlarmActions
cloudformation:DescribeStacks cloudformation:GetTemplate cloudformation:ListStackResources cloudformation:CreateStack cloudformation:UpdateStack cloudformation:DeleteStack cloudformation:DescribeStackEvents
ecr:DescribeRepositories ecr:ListImages ecr:GetAuthorizationToken ecr:BatchGetImage ecr:GetDownloadUrlForLayer ecr:PutImage ecr:CreateRepository ecr:DeleteRepository
ecs:ListClusters ecs:DescribeClusters ecs:ListServices ecs:DescribeServices ecs:ListTaskDefinitions ecs:DescribeTaskDefinition ecs:RunTask ecs:StopTask ecs:ExecuteCommand ecs:RegisterTaskDefinition
eks:ListNodegroups eks:DescribeNodegroup eks:UpdateClusterConfig eks:CreateCluster eks:DeleteCluster eks:ListFargateProfiles
elasticloadbalancing:DescribeLoadBalancers elasticloadbalancing:DescribeTargetGroups elasticloadbalancing:DescribeListeners elasticloadbalancing:DeleteLoadBalancer elasticloadbalancing:ModifyListener
route53:ListResourceRecordSets route53:ChangeResourceRecordSets route53:CreateHostedZone route53:DeleteHostedZone route53domains:ListDomains
organizations:ListAccounts organizations:DescribeOrganization organizations:ListPolicies organizations:DescribePolicy organizations:ListOrganizationalUnitsForParent organizations:LeaveOrganization
guardduty:ListDetectors guardduty:GetDetector guardduty:ListFindings guardduty:GetFindings guardduty:DeleteDetector guardduty:UpdateDetector
securityhub:GetFindings securityhub:DescribeHub securityhub:BatchUpdateFindings securityhub:DisableSecurityHub
config:DescribeConfigRules config:DescribeConfigurationRecorders config:StopConfigurationRecorder config:DeleteConfigurationRecorder config:DescribeDeliveryChannels
athena:ListWorkGroups athena:ListDatabases athena:StartQueryExecution athena:GetQueryResults athena:GetWorkGroup
glue:GetDatabases glue:GetTables glue:GetConnections glue:GetJobs glue:CreateJob glue:StartJobRun glue:UpdateJob
redshift:DescribeClusters redshift:GetClusterCredentials redshift:CreateClusterSnapshot redshift:ModifyCluster
sagemaker:ListNotebookInstances sagemaker:DescribeNotebookInstance sagemaker:CreatePresignedNotebookInstanceUrl sagemaker:ListModels sagemaker:CreateTrainingJob
cognito-idp:ListUserPools cognito-idp:ListUsers cognito-idp:AdminCreateUser cognito-idp:AdminSetUserPassword cognito-idp:AdminAddUserToGroup cognito-idp:DescribeUserPool
elasticache:DescribeCacheClusters elasticache:DescribeReplicationGroups elasticache:DeleteCacheCluster
efs:DescribeFileSystems efs:DescribeMountTargets efs:CreateFileSystem efs:DeleteFileSystem
backup:ListBackupVaults backup:ListRecoveryPointsByBackupVault backup:StartRestoreJob backup:DeleteBackupVault
states:ListStateMachines states:DescribeStateMachine states:StartExecution states:StopExecution states:DeleteStateMachine
codebuild:ListProjects codebuild:BatchGetProjects codebuild:StartBuild codebuild:UpdateProject
codepipeline:ListPipelines codepipeline:GetPipeline codepipeline:StartPipelineExecution codepipeline:UpdatePipeline
codecommit:ListRepositories codecommit:GetRepository codecommit:GitPull codecommit:CreateRepository codecommit:DeleteRepository
apigateway:GET apigateway:POST apigateway:DELETE
events:ListRules events:DescribeRule events:PutRule events:PutTargets events:DeleteRule events:DisableRule
firehose:ListDeliveryStreams firehose:DescribeDeliveryStream firehose:CreateDeliveryStream
elasticbeanstalk:DescribeEnvironments elasticbeanstalk:DescribeApplicationVersions elasticbeanstalk:CreateApplication elasticbeanstalk:CreateEnvironment elasticbeanstalk:RebuildEnvironment
cloudfront:ListDistributions cloudfront:GetDistribution cloudfront:CreateDistribution cloudfront:UpdateDistribution cloudfront:DeleteDistribution cloudfront:CreateInvalidation
bedrock:ListFoundationModels bedrock:GetFoundationModel bedrock:InvokeModel bedrock:ListGuardrails bedrock:CreateGuardrail
"""


def severity_for(action):
    service, verb = action.split(":", 1)
    privesc = {
        "iam:SetDefaultPolicyVersion", "iam:CreatePolicyVersion", "iam:AttachUserPolicy",
        "iam:AttachGroupPolicy", "iam:AttachRolePolicy", "iam:PutUserPolicy",
        "iam:PutGroupPolicy", "iam:PutRolePolicy", "iam:AddUserToGroup",
        "iam:UpdateAssumeRolePolicy", "iam:PassRole", "iam:CreateAccessKey",
        "iam:CreateLoginProfile", "iam:UpdateLoginProfile", "sts:AssumeRole",
        "lambda:UpdateFunctionCode", "lambda:AddPermission",
        "cognito-idp:AdminSetUserPassword", "kms:PutKeyPolicy", "redshift:GetClusterCredentials",
        "sagemaker:CreatePresignedNotebookInstanceUrl", "ecr:GetAuthorizationToken",
        "ec2:ModifySnapshotAttribute", "ssm:StartSession", "ssm:SendCommand",
        "ecs:ExecuteCommand",
    }
    critical = {
        "iam:DeleteUser", "iam:DeleteRole", "iam:DeleteGroup", "iam:DeletePolicy",
        "iam:DeleteUserPolicy", "iam:DeleteRolePolicy", "iam:DetachUserPolicy",
        "iam:DetachRolePolicy", "iam:DeleteAccessKey", "iam:DeleteLoginProfile",
        "cloudtrail:StopLogging", "cloudtrail:DeleteTrail", "guardduty:DeleteDetector",
        "securityhub:DisableSecurityHub", "config:StopConfigurationRecorder",
        "config:DeleteConfigurationRecorder", "kms:ScheduleKeyDeletion", "kms:DisableKey",
        "logs:DeleteLogGroup", "logs:DeleteLogStream", "organizations:LeaveOrganization",
    }
    if action in privesc:
        return "PrivEscVector"
    if action in critical:
        return "Critical"
    if verb.startswith(READONLY_VERBS):
        if action == "iam:GetAccountAuthorizationDetails":
            return "Medium"
        if action in ("secretsmanager:GetSecretValue", "ec2:GetPasswordData",
                      "kms:Decrypt", "s3:GetObject", "dynamodb:Scan", "ssm:GetParameter",
                      "ssm:GetParameters", "ssm:GetParametersByPath"):
            return "High"
        return "Low"
    if verb.startswith(("Delete", "Terminate", "Stop", "Purge", "Deactivate",
                        "Disable", "Revoke", "Remove", "Detach", "Leave")):
        return "High"
    if verb.startswith(("Create", "Run", "Start", "Put", "Update", "Modify", "Attach",
                        "Add", "Invoke", "Send", "Publish", "Subscribe", "Register",
                        "Execute", "Change", "Copy", "Restore", "Tag", "Associate",
                        "Allocate", "Activate", "Accept", "Promote", "Set", "Batch",
                        "Bundle", "Cancel", "Rebuild", "Git", "POST", "DECODE", "Schedule")):
        return "Medium"
    return "Medium"


def mitre_for(action, severity):
    service, verb = action.split(":", 1)
    if severity == "PrivEscVector":
        if action == "sts:AssumeRole":
            return ("TA0004", "T1548", "T1548.005")
        if action in ("iam:CreateAccessKey", "iam:CreateLoginProfile", "iam:UpdateLoginProfile",
                      "cognito-idp:AdminSetUserPassword"):
            return ("TA0003", "T1098", "T1098.001")
        if action in ("ssm:StartSession", "ssm:SendCommand", "ecs:ExecuteCommand",
                      "lambda:UpdateFunctionCode", "lambda:AddPermission"):
            return ("TA0002", "T1651", None)
        return ("TA0004", "T1098", "T1098.003")
    if severity == "Critical":
        if service in ("cloudtrail", "guardduty", "securityhub", "config", "logs"):
            return ("TA0005", "T1562", "T1562.008")
        return ("TA0040", "T1485", None)
    if verb.startswith(READONLY_VERBS):
        if service == "iam" or service == "sts":
            return ("TA0007", "T1069", "T1069.003")
        if service == "s3" or service == "s3tables":
            return ("TA0007", "T1619", None)
        if action in ("secretsmanager:GetSecretValue", "ssm:GetParameter", "ssm:GetParameters",
                      "ssm:GetParametersByPath", "ec2:GetPasswordData", "kms:Decrypt"):
            return ("TA0006", "T1555", "T1555.006")
        return ("TA0007", "T1580", None)
    if verb.startswith(("Run", "Create")) and service in ("ec2", "ecs", "eks", "lambda"):
        return ("TA0002", "T1578", "T1578.002")
    if verb.startswith(("Delete", "Terminate", "Stop", "Purge")):
        return ("TA0040", "T1485", None)
    return ("TA0040", "T1565", None)


def kebab(verb):
    out = []
    for ch in verb:
        if ch.isupper() and out and out[-1] != "-":
            out.append("-")
        out.append(ch.lower())
    return "".join(out).replace("--", "-")


def intel_entry(action):
    severity = severity_for(action)
    tactic, technique, sub = mitre_for(action, severity)
    service, verb = action.split(":", 1)
    abuse = {
        "PrivEscVector": "Grants a direct privilege-escalation primitive: abuse it to mint or broaden credentials beyond the caller's current scope.",
        "Critical": "Destroys or blinds account controls; abuse for impact or to evade detection while operating.",
        "High": "Reads sensitive material or removes resources; abuse for data theft or service disruption.",
        "Medium": "Mutates account state; abuse to stage infrastructure or persist alongside stronger primitives.",
        "Low": "Read-only reconnaissance; abuse to map the account and select follow-on targets.",
    }[severity]
    entry = {
        "action": action,
        "severity": severity,
        "tactic": tactic,
        "technique": technique,
        "sub_technique": sub,
        "abuse": abuse,
        "example_command": "aws %s %s %s" % (service, kebab(verb),
                                             "" if catalog_entry(action)["invocation"] == "no-args"
                                             else catalog_entry(action)["invocation"]),
    }
    entry["example_command"] = entry["example_command"].strip()
    return entry


def main():
    with open(PAPER) as fh:
        text = fh.read()
    scenarios = parse_appendix(text)
    check(scenarios)

    os.makedirs(os.path.join(OUT, "scenarios"), exist_ok=True)
    fixtures = {}
    for sid in range(1, 23):
        fixtures[sid] = build_fixture(sid, scenarios[sid])
        path = os.path.join(OUT, "scenarios", "S%d.json" % sid)
        with open(path, "w") as fh:
            json.dump(fixtures[sid][0], fh, indent=1, sort_keys=True)
            fh.write("\n")

    scenario_actions = collect_actions(fixtures)
    with open(os.path.join(OUT, "catalog_scenarios.jsonl"), "w") as fh:
        for action in sorted(scenario_actions):
            fh.write(json.dumps(catalog_entry(action), sort_keys=True) + "\n")

    seed_actions = set(scenario_actions)
    seed_actions.update(SEED_EXTRA.split())
    with open(os.path.join(OUT, "catalog_seed.jsonl"), "w") as fh:
        for action in sorted(seed_actions):
            fh.write(json.dumps(catalog_entry(action), sort_keys=True) + "\n")
    print("seed catalog size:", len(seed_actions))

    with open(os.path.join(OUT, "intel_seed.jsonl"), "w") as fh:
        for action in sorted(seed_actions):
            fh.write(json.dumps(intel_entry(action), sort_keys=True) + "\n")

    vendor_arns = ["arn:aws:iam::aws:policy/%s" % name for name in sorted(VENDOR_DOCS)]
    vendor_arns += ["arn:aws:iam::aws:policy/%s" % name for name in (
        "AdministratorAccess", "PowerUserAccess", "ReadOnlyAccess", "SecurityAudit",
        "ViewOnlyAccess", "IAMReadOnlyAccess", "IAMFullAccess", "AmazonS3ReadOnlyAccess",
        "AmazonS3FullAccess", "AmazonEC2ReadOnlyAccess", "AmazonEC2FullAccess",
        "AWSLambda_FullAccess", "AmazonRDSReadOnlyAccess", "CloudWatchReadOnlyAccess",
        "AmazonDynamoDBReadOnlyAccess")]
    with open(os.path.join(OUT, "aws_managed_arns.json"), "w") as fh:
        json.dump(sorted(set(vendor_arns)), fh, indent=1)
        fh.write("\n")

    # Summary for eyeballing.
    for sid in range(1, 23):
        fx = fixtures[sid][0]
        print("S%-2d users=%d groups=%d roles=%d policies=%d creds=%d" % (
            sid, len(fx["users"]), len(fx["groups"]), len(fx["roles"]),
            len(fx["managed_policies"]), len(fx["credentials"])))


if __name__ == "__main__":
    sys.exit(main())
